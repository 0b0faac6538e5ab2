// Incremental parser for newline-delimited JSON arriving in arbitrary
// chunk boundaries.

export class NdjsonParser {
  private buffer = "";

  /** Feed one chunk; returns every complete JSON value it finished. */
  push(chunk: string): unknown[] {
    this.buffer += chunk;
    const out: unknown[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, idx).trim();
      this.buffer = this.buffer.slice(idx + 1);
      if (!line) continue;
      out.push(JSON.parse(line));
    }
    return out;
  }

  /** Any trailing complete value when the stream closes without a newline. */
  flush(): unknown[] {
    const line = this.buffer.trim();
    this.buffer = "";
    return line ? [JSON.parse(line)] : [];
  }
}
