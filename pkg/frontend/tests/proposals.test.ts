import { describe, expect, it } from "vitest";
import {
  applyServerProposal,
  beginDecision,
  canDecide,
  cardRows,
  decisionFailed,
  makeCard,
} from "../src/proposals.js";
import { loadFixtureProposals } from "./stub_server.js";
import type { Proposal } from "../src/types.js";

function pending(): Proposal {
  return { ...loadFixtureProposals()[0], status: "PENDING" };
}

describe("proposal cards", () => {
  it("affordances enabled only while PENDING", () => {
    const card = makeCard(pending());
    expect(canDecide(card)).toBe(true);
    applyServerProposal(card, { ...pending(), status: "APPLIED" });
    expect(canDecide(card)).toBe(false);
  });

  it("a click disables further clicks until the server answers", () => {
    const card = makeCard(pending());
    expect(beginDecision(card)).toBe(true);
    expect(beginDecision(card)).toBe(false); // double click is a no-op
    // status is NOT changed optimistically
    expect(card.proposal.status).toBe("PENDING");
  });

  it("server push resolves the busy state with the audited status", () => {
    const card = makeCard(pending());
    beginDecision(card);
    applyServerProposal(card, { ...pending(), status: "APPLIED" });
    expect(card.proposal.status).toBe("APPLIED");
    expect(card.busy).toBe(false);
    expect(canDecide(card)).toBe(false);
  });

  it("a failed decision re-enables a still-pending card", () => {
    const card = makeCard(pending());
    beginDecision(card);
    decisionFailed(card);
    expect(canDecide(card)).toBe(true);
  });

  it("ignores updates for other proposals", () => {
    const card = makeCard(pending());
    applyServerProposal(card, { ...pending(), proposal_id: "prop-9", status: "APPLIED" });
    expect(card.proposal.status).toBe("PENDING");
  });

  it("renders one row per patch entry with old and new values", () => {
    const rows = cardRows(pending());
    expect(rows).toHaveLength(6);
    const ttt = rows.find((r) => r.path === "gnb/31/cell/2/a3/ttt-ms");
    expect(ttt).toEqual({ path: "gnb/31/cell/2/a3/ttt-ms", from: 100, to: 320 });
  });
});
