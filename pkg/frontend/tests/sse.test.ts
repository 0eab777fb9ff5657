import { describe, expect, it } from "vitest";

import { SseParser, streamEvents } from "../src/sse.js";

describe("SseParser", () => {
  it("parses complete frames with id and event", () => {
    const parser = new SseParser();
    const events = parser.feed(
      'id: 3\nevent: message\ndata: {"turn": 3}\n\nevent: phase\ndata: {}\n\n',
    );
    expect(events).toEqual([
      { id: 3, event: "message", data: '{"turn": 3}' },
      { id: undefined, event: "phase", data: "{}" },
    ]);
  });

  it("buffers partial frames across feeds", () => {
    const parser = new SseParser();
    expect(parser.feed("id: 1\nda")).toEqual([]);
    expect(parser.feed("ta: hello\n\n")).toEqual([
      { id: 1, event: "message", data: "hello" },
    ]);
  });

  it("joins multi-line data", () => {
    const parser = new SseParser();
    const [event] = parser.feed("data: a\ndata: b\n\n");
    expect(event.data).toBe("a\nb");
  });
});

describe("streamEvents", () => {
  function fakeResponse(body: string): Response {
    return new Response(body, {
      status: 200,
      headers: { "content-type": "text/event-stream" },
    });
  }

  it("sends Last-Event-ID and surfaces events", async () => {
    let seenHeaders: Record<string, string> = {};
    const fetchImpl = (async (url: RequestInfo | URL, init?: RequestInit) => {
      seenHeaders = (init?.headers ?? {}) as Record<string, string>;
      return fakeResponse('id: 5\ndata: {"turn": 5}\n\n');
    }) as typeof fetch;

    const seen: number[] = [];
    await streamEvents("http://x/v1/sessions/s/events", (e) => seen.push(e.id!), {
      lastEventId: 4,
      fetchImpl,
    });
    expect(seenHeaders["Last-Event-ID"]).toBe("4");
    expect(seen).toEqual([5]);
  });

  it("rejects on HTTP errors", async () => {
    const fetchImpl = (async () => new Response("nope", { status: 404 })) as
      typeof fetch;
    await expect(
      streamEvents("http://x/events", () => {}, { fetchImpl }),
    ).rejects.toThrow("404");
  });
});
