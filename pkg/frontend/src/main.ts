// Browser entry point: wires the controller and renderers to the DOM.
// Expects index.html to provide #chat, #viewer, #ask-form, and #question.

import { ApiClient } from './api.js';
import { renderPageViewer, renderTranscript } from './render.js';
import { ViewController } from './state.js';

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const docId = params.get('doc') ?? '';
  const pageCount = Number(params.get('pages') ?? '1');
  const api = new ApiClient(params.get('api') ?? '');

  const chat = document.querySelector<HTMLElement>('#chat')!;
  const viewer = document.querySelector<HTMLElement>('#viewer')!;
  const form = document.querySelector<HTMLFormElement>('#ask-form')!;
  const input = document.querySelector<HTMLInputElement>('#question')!;

  const controller = await ViewController.open(api, docId, pageCount);

  const paint = (): void => {
    chat.innerHTML = renderTranscript(controller.state);
    viewer.innerHTML = renderPageViewer(controller.state);
    input.disabled = controller.state.busy;
    for (const chip of chat.querySelectorAll<HTMLButtonElement>('.page-chip')) {
      chip.addEventListener('click', async () => {
        await controller.jumpToPage(Number(chip.dataset.page));
        paint();
      });
    }
  };

  form.addEventListener('submit', async (event) => {
    event.preventDefault();
    const question = input.value.trim();
    if (!question || controller.state.busy) {
      return;
    }
    input.value = '';
    await controller.askAndRender(question);
    paint();
  });

  paint();
}

if (typeof window !== 'undefined' && typeof document !== 'undefined') {
  void boot();
}
