/**
 * Panel controller: holds state, talks to the service, and produces a
 * render model.  Stateless with respect to the model itself — every score
 * displayed comes from a service response, never from local recomputation.
 */

import { ApiClient, ServiceError } from "./api.js";
import { buildHeatmap, type HeatmapModel } from "./heatmap.js";
import {
  clampEps,
  initialState,
  Sequencer,
  type PanelState,
  type Snapshot,
} from "./state.js";
import type { Mode } from "./types.js";

export interface SentenceRow {
  index: number;
  text: string;
  centrality: number;
  /** Selected and carrying positive centrality; zero-mass picks are vacuous. */
  selected: boolean;
  /** Bar width in [0, 1], scaled by the largest centrality in the document. */
  bar: number;
}

export interface RenderModel {
  heatmap: HeatmapModel | null;
  sentences: SentenceRow[];
  summary: string | null;
  epsN: number;
  epsR: number;
  mode: Mode;
  comparison: Snapshot | null;
  banner: PanelState["banner"];
  busy: boolean;
}

export type RenderFn = (model: RenderModel, state: PanelState) => void;

export class PanelController {
  readonly state: PanelState = initialState();
  private readonly seq = new Sequencer();

  constructor(
    private readonly api: ApiClient,
    private readonly onRender: RenderFn = () => {},
  ) {}

  async loadDocument(
    text: string,
    title?: string,
    summary?: string,
  ): Promise<void> {
    this.state.busy = true;
    this.render();
    try {
      const added = await this.api.addDocument(text, title, summary);
      this.state.docId = added.doc_id;
      this.state.lastMatrix = null;
      this.state.lastExtract = null;
      this.state.lastSummary = null;
      this.state.comparison = null;
      this.state.banner = null;
    } catch (err) {
      this.state.busy = false;
      this.applyError(err);
      this.render();
      return;
    }
    await this.refresh();
  }

  /** Clamp to the slider grid and refresh; callers debounce rapid changes. */
  async setThresholds(epsN: number, epsR: number): Promise<void> {
    this.state.epsN = clampEps(epsN);
    this.state.epsR = clampEps(epsR);
    if (this.state.docId !== null) {
      await this.refresh();
    }
  }

  async setMode(mode: Mode): Promise<void> {
    this.state.mode = mode;
    if (this.state.docId !== null) {
      await this.refresh();
    }
  }

  /** Freeze the current thresholds and summary for side-by-side comparison. */
  pinComparison(): void {
    if (this.state.lastSummary === null) {
      return;
    }
    this.state.comparison = Object.freeze({
      epsN: this.state.epsN,
      epsR: this.state.epsR,
      summary: this.state.lastSummary,
    });
    this.render();
  }

  private async refresh(): Promise<void> {
    const docId = this.state.docId;
    if (docId === null) {
      return;
    }
    const ticket = this.seq.next();
    const { epsN, epsR, mode } = this.state;
    this.state.busy = true;
    this.render();
    try {
      const matrixReq = this.api.matrix(docId, epsN, epsR);
      const extractReq = this.api.summarizeExtract({
        doc_id: docId,
        mode: "extract",
        eps_n: epsN,
        eps_r: epsR,
      });
      const summaryReq =
        mode === "abstract"
          ? this.api.summarizeAbstract({
              doc_id: docId,
              mode: "abstract",
              eps_n: epsN,
              eps_r: epsR,
            })
          : null;
      const [matrix, extract, abstract] = await Promise.all([
        matrixReq,
        extractReq,
        summaryReq ?? Promise.resolve(null),
      ]);
      if (!this.seq.isCurrent(ticket)) {
        return; // a newer control change superseded this response
      }
      buildHeatmap(matrix); // validate before committing any of it
      this.state.lastMatrix = matrix;
      this.state.lastExtract = extract;
      this.state.lastSummary =
        abstract !== null ? abstract.summary : extract.sentences.join(" . ");
      this.state.goodEpsN = epsN;
      this.state.goodEpsR = epsR;
      this.state.banner = null;
    } catch (err) {
      if (!this.seq.isCurrent(ticket)) {
        return;
      }
      this.applyError(err);
    } finally {
      if (this.seq.isCurrent(ticket)) {
        this.state.busy = false;
        this.render();
      }
    }
  }

  private applyError(err: unknown): void {
    if (err instanceof ServiceError && err.status === 0) {
      // service unreachable: keep everything, offer a retry
      this.state.banner = { kind: "retry", text: "service unreachable" };
      return;
    }
    if (err instanceof ServiceError && err.status === 422) {
      // rejected input: revert the sliders to the last accepted values
      this.state.epsN = this.state.goodEpsN;
      this.state.epsR = this.state.goodEpsR;
      this.state.banner = { kind: "error", text: err.message };
      return;
    }
    this.state.banner = {
      kind: "error",
      text: err instanceof Error ? err.message : String(err),
    };
  }

  renderModel(): RenderModel {
    const { lastMatrix, lastExtract } = this.state;
    let heatmap: HeatmapModel | null = null;
    if (lastMatrix !== null) {
      heatmap = buildHeatmap(lastMatrix);
    }
    const sentences: SentenceRow[] = [];
    if (lastMatrix !== null) {
      const positives = new Set<number>();
      if (lastExtract !== null) {
        lastExtract.indices.forEach((idx, pos) => {
          if (lastExtract.scores[pos] > 0) {
            positives.add(idx);
          }
        });
      }
      const maxC = Math.max(0, ...lastMatrix.centrality);
      lastMatrix.sentences.forEach((text, i) => {
        const c = lastMatrix.centrality[i];
        sentences.push({
          index: i,
          text,
          centrality: c,
          selected: positives.has(i),
          bar: maxC > 0 ? Math.max(0, c) / maxC : 0,
        });
      });
    }
    return {
      heatmap,
      sentences,
      summary: this.state.lastSummary,
      epsN: this.state.epsN,
      epsR: this.state.epsR,
      mode: this.state.mode,
      comparison: this.state.comparison,
      banner: this.state.banner,
      busy: this.state.busy,
    };
  }

  private render(): void {
    this.onRender(this.renderModel(), this.state);
  }
}
