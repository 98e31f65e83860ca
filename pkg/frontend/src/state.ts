// View-state controller: everything the chat panel and page viewer show
// derives from this state, and every mutation goes through the serving API.

import { ApiClient, ApiError, PageView } from './api.js';

export interface TranscriptTurn {
  question: string;
  answer: string;
  cited_pages: number[];
}

export interface ViewState {
  docId: string;
  sessionId: string;
  pageCount: number;
  currentPage: number;
  currentPageView: PageView | null;
  transcript: TranscriptTurn[];
  /** Pages the retriever selected for the most recent answer. */
  selectionOverlay: number[];
  /** Inline banner for a retryable server failure; null when healthy. */
  errorBanner: string | null;
  /** Ask box disabled while a request is in flight. */
  busy: boolean;
}

export class ViewController {
  readonly state: ViewState;

  constructor(
    private readonly api: ApiClient,
    docId: string,
    sessionId: string,
    pageCount: number,
  ) {
    this.state = {
      docId,
      sessionId,
      pageCount,
      currentPage: 1,
      currentPageView: null,
      transcript: [],
      selectionOverlay: [],
      errorBanner: null,
      busy: false,
    };
  }

  static async open(api: ApiClient, docId: string, pageCount: number): Promise<ViewController> {
    const { session_id } = await api.createSession(docId);
    const controller = new ViewController(api, docId, session_id, pageCount);
    await controller.jumpToPage(1);
    return controller;
  }

  /** One grounded QA turn; the transcript changes only on success. */
  async askAndRender(question: string): Promise<ViewState> {
    if (this.state.busy) {
      return this.state;
    }
    this.state.busy = true;
    this.state.errorBanner = null;
    try {
      const reply = await this.api.ask(this.state.sessionId, question);
      this.state.transcript.push({
        question,
        answer: reply.answer,
        cited_pages: reply.cited_pages,
      });
      this.state.selectionOverlay = reply.selected_pages;
    } catch (err) {
      if (err instanceof ApiError) {
        this.state.errorBanner = err.retryable
          ? `Server unavailable (${err.message}) — try again`
          : err.message;
        return this.state;
      }
      throw err;
    } finally {
      this.state.busy = false;
    }
    return this.state;
  }

  /** Navigate the viewer; out-of-range pages are a warning no-op. */
  async jumpToPage(n: number): Promise<ViewState> {
    if (!Number.isInteger(n) || n < 1 || n > this.state.pageCount) {
      console.warn(`page ${n} out of range 1..${this.state.pageCount}`);
      return this.state;
    }
    this.state.currentPageView = await this.api.getPage(this.state.docId, n);
    this.state.currentPage = n;
    return this.state;
  }

  /** Every page cited anywhere in the transcript, ascending, deduplicated. */
  citedPages(): number[] {
    const pages = new Set<number>();
    for (const turn of this.state.transcript) {
      for (const p of turn.cited_pages) {
        pages.add(p);
      }
    }
    return [...pages].sort((a, b) => a - b);
  }

  /** True when the local transcript mirrors the server session exactly. */
  async transcriptMatchesServer(): Promise<boolean> {
    const session = await this.api.getSession(this.state.sessionId);
    if (session.history.length !== this.state.transcript.length) {
      return false;
    }
    return session.history.every((turn, i) => {
      const local = this.state.transcript[i];
      return (
        turn.question === local.question &&
        turn.answer === local.answer &&
        turn.cited_pages.length === local.cited_pages.length &&
        turn.cited_pages.every((p, j) => p === local.cited_pages[j])
      );
    });
  }
}
