import type { AnswerRequest, ScenarioAnswer, ServiceClient } from "./api.js";
import { SessionState } from "./state.js";

export type ExplorerView = {
  onMetaChanged: () => void;
  onAnswer: (answer: ScenarioAnswer | null) => void;
  onHistoryChanged: () => void;
  onError: (message: string) => void;
};

// Wires toggles/slider to the service: every state change that yields a
// non-empty scenario issues exactly one answer request; a newer change
// aborts the one still in flight.
export class ExplorerController {
  readonly state = new SessionState();
  private inflight: AbortController | null = null;

  constructor(private readonly client: ServiceClient, private readonly view: ExplorerView) {}

  async selectSketch(sketchId: string): Promise<void> {
    const meta = await this.client.getSketch(sketchId);
    this.state.selectSketch(meta);
    this.cancelInflight();
    this.view.onMetaChanged();
    this.view.onAnswer(null);
  }

  async toggle(index: number): Promise<void> {
    this.state.toggle(index);
    this.view.onMetaChanged();
    await this.dispatch();
  }

  async setPhi(phi: number): Promise<void> {
    this.state.phi = phi;
    this.view.onMetaChanged();
    if (this.state.meta?.kind === "quantile") {
      await this.dispatch();
    }
  }

  private cancelInflight(): void {
    if (this.inflight) {
      this.inflight.abort();
      this.inflight = null;
    }
  }

  /** Issue one answer request for the current scenario, if dispatchable. */
  async dispatch(): Promise<void> {
    if (!this.state.canDispatch) {
      this.cancelInflight();
      this.view.onAnswer(null);
      return;
    }
    const sketchId = this.state.sketchId!;
    const request: AnswerRequest = { scenario: this.state.scenario() };
    if (this.state.meta?.kind === "quantile") {
      request.phi = this.state.phi;
    }
    this.cancelInflight();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const response = await this.client.answer(sketchId, request, controller.signal);
      if (controller.signal.aborted) return;
      this.inflight = null;
      this.state.pushHistory({
        sketchId,
        scenario: response.answer.scenario,
        answer: response.answer,
        timestamp: Date.now(),
        degraded: response.answer.degraded,
      });
      this.view.onAnswer(response.answer);
      this.view.onHistoryChanged();
    } catch (error) {
      if (controller.signal.aborted) return;  // a newer request superseded this one
      this.inflight = null;
      this.view.onError(error instanceof Error ? error.message : String(error));
    }
  }
}
