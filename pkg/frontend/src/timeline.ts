// Chat timeline state: ordered, deduplicated, idempotent under replay.

import type { AuditRecord, ChatEntry } from "./types.js";

export class Timeline {
  private byId = new Map<number, ChatEntry>();

  /** Insert an entry; duplicates (same entry_id) are ignored. */
  add(entry: ChatEntry): boolean {
    if (this.byId.has(entry.entry_id)) return false;
    this.byId.set(entry.entry_id, entry);
    return true;
  }

  addAll(entries: ChatEntry[]): number {
    let added = 0;
    for (const entry of entries) if (this.add(entry)) added += 1;
    return added;
  }

  /** Entries in server order (entry_id ascending). */
  list(): ChatEntry[] {
    return [...this.byId.values()].sort((a, b) => a.entry_id - b.entry_id);
  }

  lastEntryId(): number {
    let last = 0;
    for (const id of this.byId.keys()) if (id > last) last = id;
    return last;
  }

  /** rApp step entries keyed the way the audit log keys STEP records. */
  stepKeys(): Set<string> {
    const keys = new Set<string>();
    for (const entry of this.byId.values()) {
      if (entry.author === "RAPP" && entry.cycle_id !== null && entry.step_index !== null) {
        keys.add(`${entry.cycle_id}/step-${entry.step_index}`);
      }
    }
    return keys;
  }
}

/** Rendered-timeline fidelity: rApp step entries == the audit's STEP records. */
export function timelineMatchesAudit(timeline: Timeline, audit: AuditRecord[]): boolean {
  const auditKeys = new Set(
    audit.filter((r) => r.action === "STEP").map((r) => r.subject),
  );
  const timelineKeys = timeline.stepKeys();
  if (auditKeys.size !== timelineKeys.size) return false;
  for (const key of auditKeys) if (!timelineKeys.has(key)) return false;
  return true;
}
