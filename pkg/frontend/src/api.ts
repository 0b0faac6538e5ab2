// The console's entire surface against the service. The only mutations a
// console can cause are chat turns and proposal decisions; there is
// deliberately no config write path here.

import type { AuditRecord, Proposal, RunReportDocument } from "./types.js";

export class NotPendingError extends Error {}

export class ConsoleApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) throw new Error(`GET ${path} -> ${resp.status}`);
    return (await resp.json()) as T;
  }

  async getProposals(): Promise<Proposal[]> {
    const doc = await this.getJson<{ proposals: Proposal[] }>("/proposals");
    return doc.proposals;
  }

  async getAudit(): Promise<AuditRecord[]> {
    const doc = await this.getJson<{ records: AuditRecord[] }>("/audit");
    return doc.records;
  }

  async getConfig(): Promise<{ version: number; tree: Record<string, number> }> {
    return this.getJson("/config");
  }

  async getRunReport(runId: string): Promise<RunReportDocument | null> {
    const resp = await this.fetchFn(`${this.baseUrl}/runs/${runId}/report`);
    if (resp.status === 202) return null; // still running
    if (!resp.ok) throw new Error(`report ${runId} -> ${resp.status}`);
    const doc = (await resp.json()) as { report: RunReportDocument };
    return doc.report;
  }

  async sendChat(text: string): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/chat`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
    if (!resp.ok) throw new Error(`chat -> ${resp.status}`);
  }

  /** Approve or reject; 409 means the card was stale (not PENDING anymore). */
  async submitDecision(proposalId: string, decision: "approve" | "reject"): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/proposals/${proposalId}/${decision}`, {
      method: "POST",
    });
    if (resp.status === 409) throw new NotPendingError(`proposal ${proposalId} is not pending`);
    if (!resp.ok) throw new Error(`${decision} ${proposalId} -> ${resp.status}`);
    // the card's status is updated from the pushed stream, never from here
  }
}
