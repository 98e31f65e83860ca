// Pure HTML-string renderers for the chat panel and page viewer. Keeping
// these free of document access lets them run and be asserted anywhere;
// main.ts owns the actual DOM wiring.

import { ViewState } from './state.js';

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function renderChip(pageNo: number): string {
  return `<button class="page-chip" data-page="${pageNo}">Page ${pageNo}</button>`;
}

export function renderTranscript(state: ViewState): string {
  const turns = state.transcript
    .map((turn) => {
      const chips = turn.cited_pages.map(renderChip).join(' ');
      return (
        `<div class="turn">` +
        `<div class="question">${escapeHtml(turn.question)}</div>` +
        `<div class="answer">${escapeHtml(turn.answer)}</div>` +
        (chips ? `<div class="citations">${chips}</div>` : '') +
        `</div>`
      );
    })
    .join('');
  const banner = state.errorBanner
    ? `<div class="error-banner" role="alert">${escapeHtml(state.errorBanner)}</div>`
    : '';
  return `<div class="transcript">${turns}</div>${banner}`;
}

export function renderPageViewer(state: ViewState): string {
  const view = state.currentPageView;
  if (!view) {
    return '<div class="page-viewer empty">No page loaded</div>';
  }
  const overlay = state.selectionOverlay.includes(view.page_no) ? ' selected' : '';
  const paragraphs = view.paragraphs
    .map((p) => {
      const [x0, y0, x1, y1] = p.box;
      const style =
        `left:${(x0 * 100).toFixed(2)}%;top:${(y0 * 100).toFixed(2)}%;` +
        `width:${((x1 - x0) * 100).toFixed(2)}%;height:${((y1 - y0) * 100).toFixed(2)}%`;
      return `<div class="paragraph" style="${style}">${escapeHtml(p.text)}</div>`;
    })
    .join('');
  return (
    `<div class="page-viewer${overlay}" data-page="${view.page_no}">` +
    `<header>Page ${view.page_no} / ${view.page_count}</header>` +
    `<div class="page-body">${paragraphs}</div>` +
    `</div>`
  );
}
