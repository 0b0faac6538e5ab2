import { describe, expect, it } from "vitest";
import { ChatStreamClient, type ConnectionState } from "../src/stream.js";
import type { ChatEntry } from "../src/types.js";

function entry(id: number): ChatEntry {
  return {
    entry_id: id, author: "RAPP", text: `e${id}`, mode: "NEXT",
    proposal_id: null, cycle_id: "cycle-1", step_index: id - 1, timestamp: 0,
  };
}

function ndjsonBody(docs: unknown[], fail: boolean): ReadableStream<Uint8Array> {
  const encoder = new TextEncoder();
  let next = 0;
  return new ReadableStream({
    // deliver on demand so every chunk is read before a simulated drop
    // (erroring up front would discard the queued chunks)
    pull(controller) {
      if (next < docs.length) {
        controller.enqueue(encoder.encode(JSON.stringify(docs[next]) + "\n"));
        next += 1;
        return;
      }
      if (fail) controller.error(new Error("connection dropped"));
      else controller.close();
    },
  });
}

describe("ChatStreamClient", () => {
  it("resumes after a drop using ?after= and never duplicates", async () => {
    const all = [entry(1), entry(2), entry(3), entry(4)];
    const afters: number[] = [];
    let call = 0;
    const fetchFn = (async (input: RequestInfo | URL) => {
      const url = new URL(String(input));
      afters.push(Number(url.searchParams.get("after")));
      call += 1;
      if (call === 1) {
        // first two entries, then the connection dies
        return new Response(ndjsonBody([all[0], all[1], { heartbeat: 1 }], true));
      }
      const after = Number(url.searchParams.get("after"));
      return new Response(ndjsonBody(all.filter((e) => e.entry_id > after), false));
    }) as typeof fetch;

    const received: number[] = [];
    const states: ConnectionState[] = [];
    const client = new ChatStreamClient({
      baseUrl: "http://svc",
      onEntry: (e) => {
        received.push(e.entry_id);
        if (received.length === all.length) client.stop();
      },
      onState: (s) => states.push(s),
      fetchFn,
      sleepFn: async () => {},
    });
    await client.run();

    expect(received).toEqual([1, 2, 3, 4]);
    expect(afters[0]).toBe(0);
    expect(afters[1]).toBe(2); // resume point = last seen entry
    expect(states).toContain("reconnecting");
    expect(states[states.length - 1]).toBe("stopped");
  });

  it("replayed history on reconnect is filtered out client-side too", async () => {
    // a server that ignores ?after= and always replays everything
    let call = 0;
    const fetchFn = (async () => {
      call += 1;
      return new Response(ndjsonBody([entry(1), entry(2)], call === 1));
    }) as typeof fetch;
    const received: number[] = [];
    const client = new ChatStreamClient({
      baseUrl: "http://svc",
      onEntry: (e) => received.push(e.entry_id),
      fetchFn,
      // must yield to the macrotask queue, or the reconnect loop would
      // starve the timer that stops this test
      sleepFn: () => new Promise((r) => setTimeout(r, 1)),
    });
    const run = client.run();
    await new Promise((r) => setTimeout(r, 50));
    client.stop();
    await run;
    expect(received).toEqual([1, 2]);
  });

  it("stop() aborts a read blocked on an open stream", async () => {
    const encoder = new TextEncoder();
    const fetchFn = (async (_input: RequestInfo | URL, init?: RequestInit) => {
      let controller!: ReadableStreamDefaultController<Uint8Array>;
      const body = new ReadableStream<Uint8Array>({
        start(c) {
          controller = c;
          c.enqueue(encoder.encode(JSON.stringify(entry(1)) + "\n"));
        },
        // no further chunks: the stream stays open like a live server
      });
      init?.signal?.addEventListener("abort", () => controller.error(new Error("aborted")));
      return new Response(body);
    }) as typeof fetch;

    const received: number[] = [];
    const client = new ChatStreamClient({
      baseUrl: "http://svc",
      onEntry: (e) => received.push(e.entry_id),
      fetchFn,
      sleepFn: async () => {},
    });
    const run = client.run();
    await new Promise((r) => setTimeout(r, 20));
    client.stop();
    await run; // must resolve rather than hang on the open stream
    expect(received).toEqual([1]);
  });

  it("skips heartbeats", async () => {
    const fetchFn = (async () =>
      new Response(ndjsonBody([{ heartbeat: 123 }, entry(1)], false))) as typeof fetch;
    const received: number[] = [];
    const client = new ChatStreamClient({
      baseUrl: "http://svc",
      onEntry: (e) => {
        received.push(e.entry_id);
        client.stop();
      },
      fetchFn,
      sleepFn: async () => {},
    });
    await client.run();
    expect(received).toEqual([1]);
  });
});
