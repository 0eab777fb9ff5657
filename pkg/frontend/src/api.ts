import type {
  Assessment,
  CaseSummary,
  Message,
  MessageReply,
  RecallItem,
  SessionDoc,
} from "./types.js";

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = "";
    try {
      detail = JSON.stringify(await response.json());
    } catch {
      /* non-JSON error body */
    }
    throw new Error(`HTTP ${response.status} ${detail}`);
  }
  return (await response.json()) as T;
}

/** Thin typed wrapper over the /v1 session API. No business logic here. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/v1${path}`;
  }

  listCases(): Promise<CaseSummary[]> {
    return this.fetchImpl(this.url("/cases")).then((r) => asJson<CaseSummary[]>(r));
  }

  createSession(patientId: string, scenario = "interactive"): Promise<SessionDoc> {
    return this.fetchImpl(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ patient_id: patientId, scenario }),
    }).then((r) => asJson<SessionDoc>(r));
  }

  postMessage(sessionId: string, content: string): Promise<MessageReply> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/message`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ content }),
    }).then((r) => asJson<MessageReply>(r));
  }

  recall(sessionId: string, retrievalRange = 1.0, k = 3): Promise<RecallItem[]> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/recall`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ retrieval_range: retrievalRange, k }),
    })
      .then((r) => asJson<{ items: RecallItem[] }>(r))
      .then((doc) => doc.items);
  }

  assess(sessionId: string): Promise<Assessment> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/assess`), {
      method: "POST",
    }).then((r) => asJson<Assessment>(r));
  }

  transcript(sessionId: string): Promise<Message[]> {
    return this.fetchImpl(this.url(`/sessions/${sessionId}/transcript`))
      .then((r) => asJson<{ messages: Message[] }>(r))
      .then((doc) => doc.messages);
  }

  eventsUrl(sessionId: string): string {
    return this.url(`/sessions/${sessionId}/events`);
  }
}
