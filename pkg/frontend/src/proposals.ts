// Proposal card state: server truth only. A click disables the buttons
// until the pushed stream (via a proposals refetch) confirms the new
// status; the status text itself never changes optimistically.

import type { Proposal, ProposalStatus } from "./types.js";

export interface CardRow {
  path: string;
  from: number;
  to: number;
}

export interface ProposalCard {
  proposal: Proposal;
  /** a decision is in flight; affordances stay disabled */
  busy: boolean;
}

export function makeCard(proposal: Proposal): ProposalCard {
  return { proposal, busy: false };
}

export function canDecide(card: ProposalCard): boolean {
  return card.proposal.status === "PENDING" && !card.busy;
}

/** Returns true if the click is accepted (i.e. not a double-click no-op). */
export function beginDecision(card: ProposalCard): boolean {
  if (!canDecide(card)) return false;
  card.busy = true;
  return true;
}

/** Fold in the server's current view of this proposal. */
export function applyServerProposal(card: ProposalCard, proposal: Proposal): void {
  if (proposal.proposal_id !== card.proposal.proposal_id) return;
  const changed = proposal.status !== card.proposal.status;
  card.proposal = proposal;
  if (changed || proposal.status !== "PENDING") card.busy = false;
}

/** The decision failed server-side (e.g. not pending); re-enable per truth. */
export function decisionFailed(card: ProposalCard): void {
  card.busy = false;
}

export function cardRows(proposal: Proposal): CardRow[] {
  return proposal.entries.map((e) => ({ path: e.path, from: e.expected_old, to: e.new }));
}

export function statusLabel(status: ProposalStatus): string {
  return status.charAt(0) + status.slice(1).toLowerCase();
}
