// Typed client for the recindial chat service (schema v1).

export interface RankedItem {
  id: string;
  name: string;
  prob: number;
}

export interface ItemSpan {
  item_id: string;
  name: string;
  char_start: number;
  char_end: number;
}

export interface ChatResponse {
  response: string;
  items: RankedItem[];
  item_spans: ItemSpan[];
  turn_index: number;
  latency_ms: number;
}

export interface HealthResponse {
  status: string;
  checkpoint_hash: string;
}

export interface SessionOptions {
  beam_width?: number;
  n_max?: number;
  k?: number;
}

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

export type FetchLike = typeof fetch;

export class ApiClient {
  baseUrl: string;
  private fetchFn: FetchLike;

  constructor(baseUrl = "http://localhost:8080", fetchFn: FetchLike = fetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      let detail = "";
      try {
        detail = await res.text();
      } catch {
        // error body is optional
      }
      throw new ApiError(res.status, `${method} ${path} failed (${res.status}): ${detail}`);
    }
    return (await res.json()) as T;
  }

  async createSession(options: SessionOptions = {}): Promise<string> {
    const data = await this.request<{ session_id: string }>("POST", "/session", options);
    return data.session_id;
  }

  async sendChat(sessionId: string, message: string, k?: number): Promise<ChatResponse> {
    const payload: Record<string, unknown> = { session_id: sessionId, message };
    if (k !== undefined) {
      payload.k = k;
    }
    return this.request<ChatResponse>("POST", "/chat", payload);
  }

  async health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("GET", "/health");
  }

  async deleteSession(sessionId: string): Promise<void> {
    await this.request<{ deleted: string }>("DELETE", `/session/${sessionId}`);
  }
}
