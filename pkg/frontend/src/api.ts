// Client for the scenario-service JSON API. The UI never computes
// estimates itself; every displayed number comes from these calls.

export type SketchMeta = {
  sketchId: string;
  kind: string;
  k: number;
  n: number;
  epsilon: number | null;
  delta: number | null;
  labels: string[] | null;
  checksum: string;
};

export type GroupRow = {
  group: string[];
  value: unknown;
  degraded: boolean;
  error: string | null;
};

export type ScenarioAnswer = {
  kind: string;
  scenario: number[];
  value: number | { id: number; weight: number } | { rank: number } | number[] | GroupRow[];
  degraded: boolean;
  epsilon: number | null;
  delta: number | null;
};

export type AnswerResponse = {
  answer: ScenarioAnswer;
  elapsed_ms: number;
};

export type AnswerRequest = {
  scenario: number[];
  phi?: number;
  rankOf?: number;
};

export class ServiceClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, init);
    if (!response.ok) {
      const detail = await response.text();
      throw new Error(`${init?.method ?? "GET"} ${path} -> ${response.status}: ${detail}`);
    }
    return (await response.json()) as T;
  }

  listSketches(): Promise<SketchMeta[]> {
    return this.request<SketchMeta[]>("/sketches");
  }

  getSketch(sketchId: string): Promise<SketchMeta> {
    return this.request<SketchMeta>(`/sketches/${sketchId}`);
  }

  answer(sketchId: string, body: AnswerRequest, signal?: AbortSignal): Promise<AnswerResponse> {
    return this.request<AnswerResponse>(`/sketches/${sketchId}/answer`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
  }
}
