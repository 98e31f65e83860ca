// In-memory stand-in for the serving API, speaking the same JSON shapes.
// Keeps real per-session history so transcript-vs-server checks are
// meaningful, and can be forced to fail to exercise the error path.

import { FetchLike, SessionHistoryTurn } from '../src/api.js';

interface ScriptedAnswer {
  answer: string;
  cited_pages: number[];
  selected_pages: number[];
}

export class FakeServer {
  private sessions = new Map<string, { docId: string; history: SessionHistoryTurn[] }>();
  private nextSession = 1;
  /** When set, the next ask returns a 503 with a retryable detail. */
  failNextAsk = false;
  requests: string[] = [];

  constructor(
    private readonly docId: string,
    private readonly pages: string[],
    private readonly script: ScriptedAnswer[],
  ) {}

  get fetch(): FetchLike {
    return async (input, init) => {
      this.requests.push(`${init?.method ?? 'GET'} ${input}`);
      return this.route(input, init?.method ?? 'GET', init?.body);
    };
  }

  private respond(status: number, payload: unknown) {
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => payload,
    };
  }

  private route(url: string, method: string, body?: string) {
    const pageMatch = url.match(/\/documents\/([^/]+)\/pages\/(\d+)$/);
    if (pageMatch && method === 'GET') {
      const pageNo = Number(pageMatch[2]);
      if (decodeURIComponent(pageMatch[1]) !== this.docId || pageNo < 1 || pageNo > this.pages.length) {
        return this.respond(404, { detail: 'unknown page' });
      }
      return this.respond(200, {
        doc_id: this.docId,
        page_no: pageNo,
        page_count: this.pages.length,
        text: this.pages[pageNo - 1],
        paragraphs: [{ text: this.pages[pageNo - 1], box: [0.1, 0.1, 0.9, 0.2] }],
      });
    }
    if (url.endsWith('/sessions') && method === 'POST') {
      const { doc_id } = JSON.parse(body ?? '{}');
      if (doc_id !== this.docId) {
        return this.respond(404, { detail: `unknown document ${doc_id}` });
      }
      const sessionId = `s${this.nextSession++}`;
      this.sessions.set(sessionId, { docId: doc_id, history: [] });
      return this.respond(200, { session_id: sessionId });
    }
    const askMatch = url.match(/\/sessions\/([^/]+)\/ask$/);
    if (askMatch && method === 'POST') {
      const session = this.sessions.get(askMatch[1]);
      if (!session) {
        return this.respond(404, { detail: 'unknown session' });
      }
      if (this.failNextAsk) {
        this.failNextAsk = false;
        return this.respond(503, { detail: { error: 'gateway failed', retryable: true } });
      }
      const scripted = this.script[session.history.length % this.script.length];
      const { question } = JSON.parse(body ?? '{}');
      session.history.push({
        question,
        answer: scripted.answer,
        cited_pages: scripted.cited_pages,
      });
      return this.respond(200, { ...scripted, scores: {} });
    }
    const sessionMatch = url.match(/\/sessions\/([^/]+)$/);
    if (sessionMatch && method === 'GET') {
      const session = this.sessions.get(sessionMatch[1]);
      if (!session) {
        return this.respond(404, { detail: 'unknown session' });
      }
      return this.respond(200, {
        session_id: sessionMatch[1],
        doc_id: session.docId,
        history: session.history,
      });
    }
    return this.respond(404, { detail: `no route for ${method} ${url}` });
  }
}
