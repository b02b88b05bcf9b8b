/** Pure heatmap geometry and coloring; no DOM so it is testable headless. */

import type { MatrixResponse } from "./types.js";

export interface HeatCell {
  row: number;
  col: number;
  value: number;
  /** Influence scores are strictly positive, so exactly 0 means masked. */
  masked: boolean;
  color: string;
  tooltip: string;
}

export interface HeatmapModel {
  n: number;
  cells: HeatCell[];
}

export const MASKED_COLOR = "#e8e8e8";

/** Fixed [0, 1] scale so heatmaps are comparable across thresholds. */
export function heatColor(value: number): string {
  const v = Math.min(1, Math.max(0, value));
  const lightness = 97 - 62 * v;
  return `hsl(215, 72%, ${lightness.toFixed(1)}%)`;
}

function fmt(x: number): string {
  return x.toFixed(3);
}

export function buildHeatmap(matrix: MatrixResponse): HeatmapModel {
  const n = matrix?.n;
  if (!Number.isInteger(n) || n < 1) {
    throw new Error(`malformed heatmap: bad size ${String(n)}`);
  }
  const { cells, terms } = matrix;
  if (!Array.isArray(cells) || cells.length !== n * n) {
    throw new Error(
      `malformed heatmap: ${cells?.length ?? 0} cells for n=${n}`,
    );
  }
  if (
    !terms ||
    terms.info?.length !== n ||
    terms.rel?.length !== n ||
    terms.nov?.length !== n * n
  ) {
    throw new Error("malformed heatmap: term arrays disagree with n");
  }
  const out: HeatCell[] = [];
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const value = cells[i * n + j];
      if (typeof value !== "number" || !Number.isFinite(value)) {
        throw new Error(`malformed heatmap: cell (${i}, ${j}) not a number`);
      }
      const masked = value === 0;
      out.push({
        row: i,
        col: j,
        value,
        masked,
        color: masked ? MASKED_COLOR : heatColor(value),
        tooltip:
          `q[${i + 1},${j + 1}] = ${fmt(value)}` +
          (masked ? " (masked)" : "") +
          ` | info ${fmt(terms.info[i])}` +
          `, rel ${fmt(terms.rel[i])}` +
          `, nov ${fmt(terms.nov[i * n + j])}`,
      });
    }
  }
  return { n, cells: out };
}
