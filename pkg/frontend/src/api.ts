// Thin typed client for the pageqa serving API. The fetch implementation is
// injectable so tests run against a scripted fake without any network.

export interface PageParagraph {
  text: string;
  box: [number, number, number, number];
}

export interface PageView {
  doc_id: string;
  page_no: number;
  page_count: number;
  text: string;
  paragraphs: PageParagraph[];
}

export interface AskResponse {
  answer: string;
  cited_pages: number[];
  selected_pages: number[];
  scores: Record<string, number>;
}

export interface SessionHistoryTurn {
  question: string;
  answer: string;
  cited_pages: number[];
}

export interface SessionView {
  session_id: string;
  doc_id: string;
  history: SessionHistoryTurn[];
}

export type FetchLike = (
  input: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
    public readonly retryable: boolean,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private async request<T>(path: string, method = 'GET', body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await resp.json()) as Record<string, unknown>;
    if (!resp.ok) {
      const detail = payload?.detail as { error?: string; retryable?: boolean } | string | undefined;
      const message = typeof detail === 'string' ? detail : detail?.error ?? `HTTP ${resp.status}`;
      const retryable = typeof detail === 'object' && detail !== null ? detail.retryable === true : false;
      throw new ApiError(message, resp.status, retryable);
    }
    return payload as T;
  }

  getPage(docId: string, pageNo: number): Promise<PageView> {
    return this.request<PageView>(`/documents/${encodeURIComponent(docId)}/pages/${pageNo}`);
  }

  createSession(docId: string, budget?: number): Promise<{ session_id: string }> {
    return this.request('/sessions', 'POST', { doc_id: docId, budget });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  ask(sessionId: string, question: string): Promise<AskResponse> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/ask`, 'POST', { question });
  }
}
