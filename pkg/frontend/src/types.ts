// Shapes of the documents the hoguard service serves. Field names follow
// the wire format exactly (snake_case).

export type Author = "RAPP" | "OPERATOR";

export interface ChatEntry {
  entry_id: number;
  author: Author;
  text: string;
  mode: string | null; // EVENT | NEXT | HUMAN | STOP badge for rApp entries
  proposal_id: string | null;
  cycle_id: string | null;
  step_index: number | null;
  timestamp: number;
}

export interface ProposalEntry {
  path: string;
  expected_old: number;
  new: number;
}

export type ProposalStatus = "PENDING" | "APPROVED" | "REJECTED" | "APPLIED" | "FAILED";

export interface Proposal {
  proposal_id: string;
  status: ProposalStatus;
  rationale: string;
  created_by_cycle: string;
  decided_by: string | null;
  entries: ProposalEntry[];
}

export interface AuditRecord {
  seq: number;
  actor: string;
  action: string;
  subject: string;
  digest: string;
  timestamp: number;
}

export interface HandoverSummary {
  time_s: number;
  ue_id: number;
  source_cell: number;
  target_cell: number;
  outcome: string;
  trigger_margin_db: number;
}

export interface PhaseSummary {
  a3_by_cell: Record<string, { offset_db: number; hysteresis_db: number; ttt_ms: number }>;
  event_count: number;
  handovers: HandoverSummary[];
  ping_pong_count: number;
  ping_pong_count_in_interval: number;
  fps: [number, number][];
  nominal_fps: number;
}

export interface RunReportDocument {
  meta: Record<string, unknown>;
  result: {
    scenario_id: string;
    mode: string;
    status: string;
    phases: Record<string, PhaseSummary>;
    crossing_interval_s: [number, number] | null;
    [key: string]: unknown;
  };
}
