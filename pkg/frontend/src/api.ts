import { Frame, ParetoResponse, SessionCreated } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    const text = await resp.text();
    throw new Error(`HTTP ${resp.status}: ${text}`);
  }
  return (await resp.json()) as T;
}

/** Thin REST client; the fetch function is injectable for tests. */
export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchFn(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => asJson<T>(r));
  }

  createSession(opts: {
    instance_id: string;
    checkpoint_id: string;
    preference: number[];
    seed: number;
    calibrate?: boolean;
  }): Promise<SessionCreated> {
    return this.post("/sessions", opts);
  }

  setPreference(sessionId: string, preference: number[]): Promise<unknown> {
    return this.post(`/sessions/${sessionId}/preference`, { preference });
  }

  control(
    sessionId: string,
    command: "run" | "pause" | "step" | "speed",
    extra: { steps?: number; speed?: number } = {},
  ): Promise<Frame> {
    return this.post(`/sessions/${sessionId}/control`, { command, ...extra });
  }

  state(sessionId: string): Promise<Frame> {
    return this.fetchFn(`${this.base}/sessions/${sessionId}/state`).then((r) =>
      asJson<Frame>(r),
    );
  }

  pareto(opts: {
    checkpoint_id: string;
    instance_id: string;
    grid?: number;
    C?: number;
    seed?: number;
  }): Promise<ParetoResponse> {
    const params = new URLSearchParams({
      checkpoint_id: opts.checkpoint_id,
      instance_id: opts.instance_id,
      grid: String(opts.grid ?? 11),
      C: String(opts.C ?? 16),
      seed: String(opts.seed ?? 0),
    });
    return this.fetchFn(`${this.base}/pareto?${params}`).then((r) =>
      asJson<ParetoResponse>(r),
    );
  }

  streamUrl(sessionId: string): string {
    const base = this.base || (typeof location !== "undefined" ? location.origin : "");
    return `${base.replace(/^http/, "ws")}/sessions/${sessionId}/stream`;
  }
}
