// DOM wiring for the three console views: chat, proposals, dashboards.
// All state logic lives in the pure modules; this file only renders.

import { ConsoleApi, NotPendingError } from "./api.js";
import { buildFpsOverlay, FpsOverlay } from "./dashboard.js";
import {
  applyServerProposal,
  beginDecision,
  canDecide,
  cardRows,
  decisionFailed,
  makeCard,
  ProposalCard,
  statusLabel,
} from "./proposals.js";
import { ChatStreamClient, ConnectionState } from "./stream.js";
import { Timeline } from "./timeline.js";
import type { ChatEntry, Proposal } from "./types.js";

export class ConsoleApp {
  private readonly timeline = new Timeline();
  private readonly cards = new Map<string, ProposalCard>();
  private stream: ChatStreamClient | null = null;
  private lastRunId: string | null = null;

  constructor(
    private readonly api: ConsoleApi,
    private readonly baseUrl: string,
    private readonly root: Document,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  start(): void {
    this.stream = new ChatStreamClient({
      baseUrl: this.baseUrl,
      onEntry: (entry) => this.onEntry(entry),
      onState: (state) => this.renderConnection(state),
      fetchFn: this.fetchFn,
    });
    void this.stream.run();
    void this.refreshProposals();
    this.wireChatForm();
    this.wireRunForm();
  }

  stop(): void {
    this.stream?.stop();
  }

  private el<T extends HTMLElement>(id: string): T {
    const found = this.root.getElementById(id);
    if (!found) throw new Error(`missing element #${id}`);
    return found as T;
  }

  // -- chat timeline --------------------------------------------------------

  private onEntry(entry: ChatEntry): void {
    if (!this.timeline.add(entry)) return;
    this.renderTimeline();
    // pushed steps are the trigger to re-read proposal truth
    if (entry.proposal_id !== null || entry.mode === "STOP") {
      void this.refreshProposals();
    }
  }

  private renderConnection(state: ConnectionState): void {
    const badge = this.el<HTMLSpanElement>("connection");
    badge.textContent = state;
    badge.className = `conn conn-${state}`;
  }

  private renderTimeline(): void {
    const list = this.el<HTMLUListElement>("timeline");
    list.textContent = "";
    for (const entry of this.timeline.list()) {
      const item = this.root.createElement("li");
      item.className = `entry entry-${entry.author.toLowerCase()}`;
      item.dataset.entryId = String(entry.entry_id);
      if (entry.author === "RAPP" && entry.cycle_id !== null && entry.step_index !== null) {
        item.dataset.stepKey = `${entry.cycle_id}/step-${entry.step_index}`;
      }
      const badge = this.root.createElement("span");
      badge.className = `badge badge-${(entry.mode ?? "operator").toLowerCase()}`;
      badge.textContent = entry.author === "RAPP" ? entry.mode ?? "" : "OPERATOR";
      const text = this.root.createElement("p");
      text.textContent = entry.text;
      item.append(badge, text);
      if (entry.proposal_id) {
        const card = this.cards.get(entry.proposal_id);
        if (card) item.append(this.renderCard(card));
      }
      list.append(item);
    }
  }

  // -- proposals ------------------------------------------------------------

  private async refreshProposals(): Promise<void> {
    let proposals: Proposal[];
    try {
      proposals = await this.api.getProposals();
    } catch {
      return; // transient; the next push retries
    }
    for (const proposal of proposals) {
      const card = this.cards.get(proposal.proposal_id);
      if (card) {
        applyServerProposal(card, proposal);
      } else {
        this.cards.set(proposal.proposal_id, makeCard(proposal));
      }
    }
    this.renderProposals();
    this.renderTimeline();
  }

  private renderProposals(): void {
    const host = this.el<HTMLDivElement>("proposals");
    host.textContent = "";
    if (this.cards.size === 0) {
      const empty = this.root.createElement("p");
      empty.className = "empty";
      empty.textContent = "No proposals yet.";
      host.append(empty);
      return;
    }
    for (const card of this.cards.values()) host.append(this.renderCard(card));
  }

  private renderCard(card: ProposalCard): HTMLElement {
    const box = this.root.createElement("div");
    box.className = `card card-${card.proposal.status.toLowerCase()}`;
    box.dataset.proposalId = card.proposal.proposal_id;
    const head = this.root.createElement("div");
    head.className = "card-head";
    head.textContent = `${card.proposal.proposal_id} — ${statusLabel(card.proposal.status)}`;
    const rationale = this.root.createElement("p");
    rationale.textContent = card.proposal.rationale;
    const table = this.root.createElement("table");
    for (const row of cardRows(card.proposal)) {
      const tr = this.root.createElement("tr");
      for (const cell of [row.path, String(row.from), "→", String(row.to)]) {
        const td = this.root.createElement("td");
        td.textContent = cell;
        tr.append(td);
      }
      table.append(tr);
    }
    const actions = this.root.createElement("div");
    actions.className = "card-actions";
    for (const decision of ["approve", "reject"] as const) {
      const button = this.root.createElement("button");
      button.textContent = decision;
      button.disabled = !canDecide(card);
      button.addEventListener("click", () => void this.decide(card, decision));
      actions.append(button);
    }
    box.append(head, rationale, table, actions);
    return box;
  }

  private async decide(card: ProposalCard, decision: "approve" | "reject"): Promise<void> {
    if (!beginDecision(card)) return; // double click no-op
    this.renderProposals();
    this.renderTimeline();
    try {
      await this.api.submitDecision(card.proposal.proposal_id, decision);
    } catch (err) {
      decisionFailed(card);
      if (err instanceof NotPendingError) {
        this.toast(`Proposal ${card.proposal.proposal_id} is no longer pending; refreshing.`);
      } else {
        this.toast(`Decision failed: ${String(err)}`);
      }
      await this.refreshProposals();
    }
    // success: the pushed confirmation step triggers the refresh
  }

  private toast(message: string): void {
    const host = this.el<HTMLDivElement>("toasts");
    const note = this.root.createElement("div");
    note.className = "toast";
    note.textContent = message;
    host.append(note);
    setTimeout(() => note.remove(), 6000);
  }

  // -- chat input -------------------------------------------------------------

  private wireChatForm(): void {
    const form = this.el<HTMLFormElement>("chat-form");
    const input = this.el<HTMLInputElement>("chat-input");
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const text = input.value.trim();
      if (!text) return;
      input.value = "";
      void this.api.sendChat(text).catch((err) => this.toast(`chat failed: ${String(err)}`));
    });
  }

  // -- dashboards ---------------------------------------------------------------

  private wireRunForm(): void {
    const form = this.el<HTMLFormElement>("run-form");
    const input = this.el<HTMLInputElement>("run-id");
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      this.lastRunId = input.value.trim() || this.lastRunId;
      void this.refreshDashboard();
    });
  }

  private async refreshDashboard(): Promise<void> {
    const host = this.el<HTMLDivElement>("dashboard");
    if (!this.lastRunId) return;
    let overlay: FpsOverlay | null = null;
    try {
      overlay = buildFpsOverlay(await this.api.getRunReport(this.lastRunId));
    } catch (err) {
      this.toast(`report fetch failed: ${String(err)}`);
    }
    host.textContent = "";
    if (!overlay) {
      const empty = this.root.createElement("p");
      empty.className = "empty";
      empty.textContent = "No FPS series for this run (yet).";
      host.append(empty);
      return;
    }
    host.append(this.drawOverlay(overlay));
  }

  private drawOverlay(overlay: FpsOverlay): HTMLCanvasElement {
    const canvas = this.root.createElement("canvas");
    canvas.width = 900;
    canvas.height = 260;
    const ctx = canvas.getContext("2d");
    if (!ctx) return canvas;
    const maxT = Math.max(...overlay.series.flatMap((s) => s.points.map((p) => p.t)), 1);
    const x = (t: number) => 40 + (t / maxT) * 840;
    const y = (fps: number) => 240 - (fps / overlay.nominalFps) * 220;
    const colors: Record<string, string> = { misconfigured: "#d64541", corrected: "#2e86de" };
    for (const line of overlay.series) {
      ctx.strokeStyle = colors[line.label] ?? "#888";
      ctx.beginPath();
      line.points.forEach((p, i) => (i === 0 ? ctx.moveTo(x(p.t), y(p.fps)) : ctx.lineTo(x(p.t), y(p.fps))));
      ctx.stroke();
    }
    for (const markers of overlay.markers) {
      ctx.fillStyle = colors[markers.label] ?? "#888";
      for (const t of markers.times) ctx.fillRect(x(t) - 1, 244, 2, 8);
    }
    return canvas;
  }
}

export function boot(): void {
  const base = window.location.origin;
  const app = new ConsoleApp(new ConsoleApi(base), base, document, fetch.bind(window));
  app.start();
}
