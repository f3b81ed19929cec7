import type {
  AnswerEnvelope,
  ApiErrorBody,
  IndexInfo,
  QueryRequest,
  TurnRecord,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Server-reported failure; carries the ApiError body from the response. */
export class ApiRequestError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message || `request failed with status ${status}`);
    this.code = body.code || "internal";
    this.status = status;
  }
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      const err = (body ?? {}) as Partial<ApiErrorBody>;
      throw new ApiRequestError(response.status, {
        code: err.code ?? "internal",
        message: err.message ?? `HTTP ${response.status}`,
      });
    }
    return body as T;
  }

  createSession(): Promise<{ session_id: string }> {
    return this.request("/v1/sessions", { method: "POST" });
  }

  query(sessionId: string, body: QueryRequest): Promise<AnswerEnvelope> {
    return this.request(`/v1/sessions/${sessionId}/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  history(sessionId: string): Promise<TurnRecord[]> {
    return this.request(`/v1/sessions/${sessionId}/history`);
  }

  indexInfo(): Promise<IndexInfo> {
    return this.request("/v1/index");
  }
}
