// Browser wiring: mounts the picker, chat, recall and assessment views and
// keeps one event-stream subscription per open session.

import { ApiClient } from "./api.js";
import { SessionStore } from "./store.js";
import { streamEvents } from "./sse.js";
import type { Message, RecallItem } from "./types.js";
import {
  assessmentView,
  chatView,
  draftQuestion,
  recallPanel,
  sessionPicker,
} from "./views.js";

const api = new ApiClient("");
let store: SessionStore | null = null;
let recallItems: RecallItem[] = [];
let streamAbort: AbortController | null = null;

function mount(id: string, html: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing mount point #${id}`);
  el.innerHTML = html;
  return el;
}

function render(): void {
  if (!store) return;
  const chat = mount("chat", chatView(store));
  const form = chat.querySelector("form.composer") as HTMLFormElement | null;
  form?.addEventListener("submit", onSend);
  mount("recall", recallPanel(recallItems));
  for (const button of document.querySelectorAll('button[data-action="draft"]')) {
    button.addEventListener("click", (e) => {
      const index = Number((e.currentTarget as HTMLElement).dataset.index);
      const input = document.querySelector(
        'input[name="message"]',
      ) as HTMLInputElement | null;
      if (input && recallItems[index]) input.value = draftQuestion(recallItems[index]);
    });
  }
  if (store.assessment) mount("assessment", assessmentView(store.assessment));
}

async function onSend(event: Event): Promise<void> {
  event.preventDefault();
  if (!store || store.inputDisabled) return;
  const input = document.querySelector('input[name="message"]') as HTMLInputElement;
  const content = input.value.trim();
  if (!content) return;
  store.sending = true;
  render();
  try {
    const reply = await api.postMessage(store.sessionId, content);
    store.addMessages(reply.messages);
  } finally {
    store.sending = false;
    render();
  }
}

function subscribe(sessionId: string): void {
  streamAbort?.abort();
  streamAbort = new AbortController();
  const run = () =>
    streamEvents(
      api.eventsUrl(sessionId),
      (e) => {
        if (e.event !== "message" || !store) return;
        const fresh = store.addMessages([JSON.parse(e.data) as Message]);
        if (fresh.length) render();
      },
      {
        lastEventId: store?.lastTurn,
        follow: true,
        signal: streamAbort!.signal,
      },
    );
  // reconnect loop; Last-Event-ID + turn dedup make replays harmless
  const loop = async () => {
    while (store && !store.closed && !streamAbort!.signal.aborted) {
      try {
        await run();
      } catch {
        await new Promise((r) => setTimeout(r, 1000));
      }
    }
  };
  void loop();
}

async function openSession(patientId: string): Promise<void> {
  const doc = await api.createSession(patientId);
  store = new SessionStore(doc.session_id);
  store.addMessages(doc.messages ?? []);
  recallItems = [];
  render();
  subscribe(doc.session_id);
  try {
    recallItems = await api.recall(doc.session_id);
  } catch {
    recallItems = []; // nothing learned yet
  }
  render();
}

async function onAssess(): Promise<void> {
  if (!store) return;
  store.setAssessment(await api.assess(store.sessionId));
  render();
}

export async function init(): Promise<void> {
  const cases = await api.listCases();
  const picker = mount("picker", sessionPicker(cases));
  picker.addEventListener("click", (e) => {
    const target = (e.target as HTMLElement).closest('button[data-action="open"]');
    if (target) void openSession((target as HTMLElement).dataset.patientId!);
  });
  document.getElementById("assess-button")?.addEventListener("click", () => {
    void onAssess();
  });
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  void init();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void init());
}
