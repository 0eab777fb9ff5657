// Server-sent-events over fetch. EventSource can't send custom headers
// (we need Last-Event-ID on reconnect), so we parse the stream by hand.

export interface SseEvent {
  id?: number;
  event: string;
  data: string;
}

/** Incremental SSE frame parser; feed() returns completed events. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const frames = this.buffer.split(/\r?\n\r?\n/);
    this.buffer = frames.pop() ?? "";
    const events: SseEvent[] = [];
    for (const frame of frames) {
      let event = "message";
      let id: number | undefined;
      const dataLines: string[] = [];
      for (const line of frame.split(/\r?\n/)) {
        if (line.startsWith("event:")) event = line.slice(6).trim();
        else if (line.startsWith("id:")) id = Number(line.slice(3).trim());
        else if (line.startsWith("data:")) dataLines.push(line.slice(5).trim());
      }
      if (dataLines.length) events.push({ id, event, data: dataLines.join("\n") });
    }
    return events;
  }
}

export interface StreamOptions {
  lastEventId?: number;
  follow?: boolean;
  signal?: AbortSignal;
  fetchImpl?: typeof fetch;
}

export async function streamEvents(
  url: string,
  onEvent: (e: SseEvent) => void,
  opts: StreamOptions = {},
): Promise<void> {
  const headers: Record<string, string> = { Accept: "text/event-stream" };
  if (opts.lastEventId !== undefined) {
    headers["Last-Event-ID"] = String(opts.lastEventId);
  }
  const doFetch = opts.fetchImpl ?? fetch;
  const target = opts.follow ? `${url}?follow=true` : url;
  const response = await doFetch(target, { headers, signal: opts.signal });
  if (!response.ok) throw new Error(`event stream failed: HTTP ${response.status}`);
  if (!response.body) throw new Error("event stream has no body");

  const reader = response.body.getReader();
  const decoder = new TextDecoder("utf-8");
  const parser = new SseParser();
  for (;;) {
    const { value, done } = await reader.read();
    if (done) break;
    for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
      onEvent(event);
    }
  }
}
