// Typed client for the tracking session service. All state shown in the UI
// is derived from these responses; nothing is computed client-side.

export interface Decision {
  word: string;
  keep: boolean;
  prob: number;
  source: "q1" | "q2" | "override";
}

export interface TurnResult {
  turn: number;
  input: string | null;
  internal_query: string[];
  decisions: Decision[];
  noop: boolean;
}

export interface HistoryResponse {
  session_id: string;
  turns: TurnResult[];
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      if (typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep statusText
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class TrackingClient {
  constructor(readonly baseUrl: string) {}

  async createSession(): Promise<string> {
    const body = await request<{ session_id: string }>(
      `${this.baseUrl}/v1/sessions`,
      { method: "POST" },
    );
    return body.session_id;
  }

  track(sessionId: string, query: string): Promise<TurnResult> {
    return request<TurnResult>(
      `${this.baseUrl}/v1/sessions/${sessionId}/track`,
      { method: "POST", body: JSON.stringify({ query }) },
    );
  }

  override(
    sessionId: string,
    index: number,
    keep: boolean,
  ): Promise<TurnResult> {
    return request<TurnResult>(
      `${this.baseUrl}/v1/sessions/${sessionId}/override`,
      { method: "POST", body: JSON.stringify({ index, keep }) },
    );
  }

  history(sessionId: string): Promise<HistoryResponse> {
    return request<HistoryResponse>(
      `${this.baseUrl}/v1/sessions/${sessionId}/history`,
    );
  }
}

export function resolveBaseUrl(): string {
  const fromEnv = import.meta.env?.VITE_API_BASE as string | undefined;
  return (fromEnv ?? "http://127.0.0.1:8000").replace(/\/$/, "");
}
