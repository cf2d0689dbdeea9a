/** Typed client for the layerstage session service. */

export interface LayerInfo {
  id: string;
  name: string;
  bbox: [number, number, number, number];
  depth_score: number;
  depth_hint: number | null;
  visible: boolean;
  anchored: boolean;
  affected_by_gravity: boolean;
  attributes: Record<string, number>;
}

export interface SupportInfo {
  edges: [string, string][];
  ground_supported: string[];
}

export interface SessionState {
  id: string;
  bundle: string;
  round: number;
  canvas: { width: number; height: number };
  ground_y: number;
  stacking: string[];
  digest: string;
  round_digests: Record<string, string>;
  undo_counts: Record<string, number>;
  layers: LayerInfo[];
  support: SupportInfo;
}

export interface ActionDoc {
  action: string;
  [param: string]: unknown;
}

export interface ActionRecordDoc {
  action: ActionDoc;
  provenance: string;
  round: number;
  result: "applied" | "rejected";
  reason?: string;
  pre_state_digest: string;
  post_state_digest: string;
  group: number;
}

export interface RoundReportDoc {
  round: number;
  records: ActionRecordDoc[];
  physics: unknown[];
  digest: string;
}

export interface DriftPointDoc {
  round: number;
  pixdiff: number;
  mean_saturation: number;
}

export interface ServerEvent {
  event: string;
  seq: number;
  round?: number;
  digest?: string;
  record?: ActionRecordDoc;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly code: string | null,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class StageApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let code: string | null = null;
      let message = `${resp.status} on ${path}`;
      try {
        const body = (await resp.json()) as Record<string, unknown>;
        const doc = (body.detail ?? body) as Record<string, unknown>;
        if (typeof doc.error === "string") code = doc.error;
        if (typeof doc.message === "string") message = doc.message;
        else if (typeof body.detail === "string") message = body.detail;
      } catch {
        /* non-JSON error body; keep the status line */
      }
      throw new ApiError(message, resp.status, code);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(bundle: string): Promise<SessionState> {
    return this.post("/sessions", { bundle });
  }

  state(sessionId: string): Promise<SessionState> {
    return this.request(`/sessions/${sessionId}/state`);
  }

  submitActions(sessionId: string, actionSequence: ActionDoc[]): Promise<RoundReportDoc> {
    return this.post(`/sessions/${sessionId}/actions`, {
      action_sequence: actionSequence,
    });
  }

  undo(sessionId: string, k: number): Promise<SessionState> {
    return this.post(`/sessions/${sessionId}/undo`, { k });
  }

  plan(sessionId: string, instruction: string): Promise<{ proposal: { action_sequence: ActionDoc[] } }> {
    return this.post(`/sessions/${sessionId}/plan`, { instruction });
  }

  diagnostics(sessionId: string): Promise<{ targets: string[]; series: DriftPointDoc[] }> {
    return this.request(`/sessions/${sessionId}/diagnostics`);
  }

  /** Render URL; `version` busts the browser cache per state digest. */
  renderUrl(sessionId: string, round?: number, version?: string): string {
    const params = new URLSearchParams();
    if (round !== undefined) params.set("round", String(round));
    if (version) params.set("v", version);
    const query = params.toString();
    return `${this.baseUrl}/sessions/${sessionId}/render${query ? `?${query}` : ""}`;
  }

  async fetchRender(sessionId: string, round?: number): Promise<ArrayBuffer> {
    const resp = await this.fetchImpl(this.renderUrl(sessionId, round));
    if (!resp.ok) throw new ApiError(`render failed`, resp.status, null);
    return resp.arrayBuffer();
  }

  eventsUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/events`;
  }
}
