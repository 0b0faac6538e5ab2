// Long-lived NDJSON stream client with reconnect and duplicate-free resume.
//
// The server replays history and then pushes live entries; on reconnect we
// pass ?after=<last seen entry_id> so nothing is duplicated and nothing is
// lost. Heartbeat lines (no entry_id) only prove liveness.

import { NdjsonParser } from "./ndjson.js";
import type { ChatEntry } from "./types.js";

export type ConnectionState = "connecting" | "connected" | "reconnecting" | "stopped";

export interface StreamOptions {
  baseUrl: string;
  onEntry: (entry: ChatEntry) => void;
  onState?: (state: ConnectionState) => void;
  fetchFn?: typeof fetch;
  /** backoff schedule in ms; last value repeats */
  backoffMs?: number[];
  sleepFn?: (ms: number) => Promise<void>;
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000, 5000];

function isChatEntry(value: unknown): value is ChatEntry {
  return typeof value === "object" && value !== null && "entry_id" in value;
}

export class ChatStreamClient {
  private lastEntryId = 0;
  private stopped = false;
  private attempt = 0;
  private aborter: AbortController | null = null;
  private readonly opts: Required<Pick<StreamOptions, "baseUrl" | "onEntry">> & StreamOptions;

  constructor(opts: StreamOptions) {
    this.opts = opts;
  }

  stop(): void {
    this.stopped = true;
    this.aborter?.abort(); // unblock a read pending on the open stream
    this.setState("stopped");
  }

  private setState(state: ConnectionState): void {
    this.opts.onState?.(state);
  }

  private async sleep(ms: number): Promise<void> {
    if (this.opts.sleepFn) return this.opts.sleepFn(ms);
    return new Promise((resolve) => setTimeout(resolve, ms));
  }

  /** Run until stop(); resolves when stopped. */
  async run(): Promise<void> {
    const fetchFn = this.opts.fetchFn ?? fetch;
    this.setState("connecting");
    while (!this.stopped) {
      try {
        const url = `${this.opts.baseUrl}/chat/stream?after=${this.lastEntryId}`;
        this.aborter = new AbortController();
        const resp = await fetchFn(url, { signal: this.aborter.signal });
        if (!resp.ok || !resp.body) throw new Error(`stream http ${resp.status}`);
        this.setState("connected");
        this.attempt = 0;
        await this.consume(resp.body);
      } catch (err) {
        if (this.stopped) break;
      }
      if (this.stopped) break;
      // connection lost: surface it, back off, resume after the last id
      this.setState("reconnecting");
      const schedule = this.opts.backoffMs ?? DEFAULT_BACKOFF;
      const wait = schedule[Math.min(this.attempt, schedule.length - 1)];
      this.attempt += 1;
      await this.sleep(wait);
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    const parser = new NdjsonParser();
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const doc of parser.push(decoder.decode(value, { stream: true }))) {
          this.handle(doc);
        }
      }
      for (const doc of parser.flush()) this.handle(doc);
    } finally {
      reader.releaseLock();
    }
  }

  private handle(doc: unknown): void {
    if (!isChatEntry(doc)) return; // heartbeat
    if (doc.entry_id <= this.lastEntryId) return; // duplicate across reconnect
    this.lastEntryId = doc.entry_id;
    this.opts.onEntry(doc);
  }
}
