/** Thin client over the /v1 endpoints; the UI never touches anything else. */

import type {
  AnnotationRecord,
  DecisionPayload,
  GuidePayload,
  MessagePayload,
  SearchResult,
  SessionView,
  TranscriptRecord,
} from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public code: string, message: string, public status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(private base: string = "/v1",
              private fetchImpl: FetchLike = (input, init) => fetch(input, init)) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, init);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(body.code ?? "Error",
                         body.message ?? response.statusText,
                         response.status);
    }
    return body as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  startSession(body: Record<string, unknown>) {
    return this.post<{ cid: string; status: string;
                       tokens: Record<string, string> }>("/sessions", body);
  }

  getSession(cid: string, token: string): Promise<SessionView> {
    return this.request(`/sessions/${cid}?role=${encodeURIComponent(token)}`);
  }

  postMessage(cid: string, payload: MessagePayload): Promise<SessionView> {
    return this.post(`/sessions/${cid}/messages`, payload);
  }

  postDecision(cid: string, payload: DecisionPayload): Promise<SessionView> {
    return this.post(`/sessions/${cid}/decision`, payload);
  }

  step(cid: string, token: string): Promise<SessionView> {
    return this.post(`/sessions/${cid}/step?role=${encodeURIComponent(token)}`,
                     {});
  }

  guide(category: string): Promise<GuidePayload> {
    return this.request(`/guide/${category}`);
  }

  searchCatalog(category: string, q: string, k = 4,
                cid?: string): Promise<{ query: string; results: SearchResult[] }> {
    const extra = cid ? `&cid=${encodeURIComponent(cid)}` : "";
    return this.request(
      `/catalog/${category}/search?q=${encodeURIComponent(q)}&k=${k}${extra}`);
  }

  catalog(category: string): Promise<{ category: string;
                                       products: SearchResult[] }> {
    return this.request(`/catalog/${category}`);
  }

  postAnnotations(records: AnnotationRecord[]) {
    return this.post<{ accepted: number }>("/annotations", { records });
  }
}

/**
 * Subscribe to the session event stream. One subscription per session; each
 * parsed record is handed to the reducer exactly once (the reducer also
 * drops duplicate seq numbers after a reconnect).
 */
export function subscribeToSession(
    base: string, cid: string, token: string,
    onRecord: (record: TranscriptRecord) => void,
    onEnd?: () => void): EventSource {
  const url = `${base}/sessions/${cid}/stream?role=${encodeURIComponent(token)}`;
  const source = new EventSource(url);
  source.onmessage = (event) => {
    onRecord(JSON.parse((event as MessageEvent).data) as TranscriptRecord);
  };
  source.addEventListener("end", () => {
    source.close();
    if (onEnd) onEnd();
  });
  return source;
}
