/** Panel state, slider snapping, request sequencing, and debouncing. */

import type { ExtractResult, MatrixResponse, Mode } from "./types.js";

export const EPS_STEP = 0.05;

export interface Snapshot {
  readonly epsN: number;
  readonly epsR: number;
  readonly summary: string;
}

export interface Banner {
  kind: "error" | "retry";
  text: string;
}

export interface PanelState {
  docId: string | null;
  epsN: number;
  epsR: number;
  mode: Mode;
  lastMatrix: MatrixResponse | null;
  lastExtract: ExtractResult | null;
  lastSummary: string | null;
  /** Last thresholds the service accepted; sliders revert here on 422. */
  goodEpsN: number;
  goodEpsR: number;
  comparison: Snapshot | null;
  banner: Banner | null;
  busy: boolean;
}

export function initialState(): PanelState {
  return {
    docId: null,
    epsN: 0,
    epsR: 0,
    mode: "abstract",
    lastMatrix: null,
    lastExtract: null,
    lastSummary: null,
    goodEpsN: 0,
    goodEpsR: 0,
    comparison: null,
    banner: null,
    busy: false,
  };
}

/** Clamp to [0, 1] and snap to the 0.05 slider grid. */
export function clampEps(value: number): number {
  const clamped = Math.min(1, Math.max(0, value));
  return Math.round(clamped / EPS_STEP) * EPS_STEP;
}

/** Monotone ticket counter; responses for stale tickets are dropped. */
export class Sequencer {
  private counter = 0;

  next(): number {
    return ++this.counter;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.counter;
  }
}

export type Timers = {
  set: (fn: () => void, ms: number) => ReturnType<typeof setTimeout>;
  clear: (id: ReturnType<typeof setTimeout>) => void;
};

const realTimers: Timers = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (id) => clearTimeout(id),
};

/**
 * Trailing-edge debounce: rapid calls collapse into one invocation with the
 * latest arguments, so each settled control fires a single refresh.
 */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
  timers: Timers = realTimers,
): (...args: A) => void {
  let pending: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (pending !== null) {
      timers.clear(pending);
    }
    pending = timers.set(() => {
      pending = null;
      fn(...args);
    }, ms);
  };
}
