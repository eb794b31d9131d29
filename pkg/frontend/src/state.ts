import type { ScenarioAnswer, SketchMeta } from "./api.js";

export const HISTORY_CAP = 200;

export type HistoryEntry = {
  sketchId: string;
  scenario: number[];
  answer: ScenarioAnswer;
  timestamp: number;
  degraded: boolean;
};

// Per-session UI state: which sketch is selected, which hypotheticals are
// toggled on, the current phi, and a capped FIFO of past answers.
export class SessionState {
  meta: SketchMeta | null = null;
  toggles: boolean[] = [];
  phi = 0.5;
  history: HistoryEntry[] = [];

  selectSketch(meta: SketchMeta): void {
    this.meta = meta;
    this.toggles = new Array(meta.k).fill(false);
  }

  get sketchId(): string | null {
    return this.meta?.sketchId ?? null;
  }

  toggle(index: number): void {
    if (index < 0 || index >= this.toggles.length) {
      throw new Error(`toggle index ${index} out of range`);
    }
    this.toggles[index] = !this.toggles[index];
  }

  /** The scenario is exactly the on-toggles, as 1-based indices. */
  scenario(): number[] {
    const on: number[] = [];
    this.toggles.forEach((isOn, i) => {
      if (isOn) on.push(i + 1);
    });
    return on;
  }

  get canDispatch(): boolean {
    return this.meta !== null && this.toggles.some(Boolean);
  }

  label(index: number): string {
    return this.meta?.labels?.[index] ?? `h${index + 1}`;
  }

  pushHistory(entry: HistoryEntry): void {
    this.history.push(entry);
    if (this.history.length > HISTORY_CAP) {
      this.history.splice(0, this.history.length - HISTORY_CAP);
    }
  }
}
