"""Shared contract between the reasoning orchestrator and its agents.

Agents see a rendered context and answer with exactly one control intent:
keep gathering evidence through one whitelisted tool, hand the decision to
a human, or stop.  Nothing in this contract can mutate configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .telemetry import LogQuery, MetricQuery

CONTEXT_RENDER_MAX_CHARS = 20_000


class Mode(Enum):
    EVENT = "EVENT"
    NEXT = "NEXT"
    HUMAN = "HUMAN"
    STOP = "STOP"


class ToolKind(Enum):
    LOG_QUERY = "LOG_QUERY"
    METRIC_QUERY = "METRIC_QUERY"
    CONFIG_GET = "CONFIG_GET"


class IntentKind(Enum):
    CONTINUE = "CONTINUE"
    ASK_HUMAN = "ASK_HUMAN"
    STOP = "STOP"


class AgentProtocolError(Exception):
    """The agent's output violated the contract (malformed intent, bad params)."""


@dataclass(frozen=True)
class ConfigScope:
    """Read scope for CONFIG_GET: leaf paths or whole a3 subtrees."""

    paths: tuple[str, ...]

    def __post_init__(self):
        if not self.paths:
            raise ValueError("config scope needs at least one path")


@dataclass(frozen=True)
class ToolRequest:
    tool: ToolKind
    params: LogQuery | MetricQuery | ConfigScope

    def to_dict(self) -> dict:
        if isinstance(self.params, LogQuery):
            params = {
                "ue_id": self.params.ue_id,
                "from_s": self.params.time_range[0],
                "to_s": self.params.time_range[1],
                "kinds": sorted(k.value for k in self.params.kinds) if self.params.kinds else None,
                "limit": self.params.limit,
            }
        elif isinstance(self.params, MetricQuery):
            params = {
                "series": self.params.series.value,
                "from_s": self.params.time_range[0],
                "to_s": self.params.time_range[1],
                "downsample_s": self.params.downsample_s,
                "cell_id": self.params.cell_id,
            }
        elif isinstance(self.params, ConfigScope):
            params = {"paths": list(self.params.paths)}
        else:  # adversarial/malformed params still need an auditable shape
            params = {"repr": repr(self.params)}
        tool = self.tool.value if isinstance(self.tool, ToolKind) else repr(self.tool)
        return {"tool": tool, "params": params}


@dataclass(frozen=True)
class ProposalDraft:
    """Agent-side sketch of a config patch; becomes a Proposal when registered."""

    entries: tuple[tuple[str, float | int, float | int], ...]  # (path, expected_old, new)
    rationale: str

    def to_dict(self) -> dict:
        return {
            "rationale": self.rationale,
            "entries": [{"path": p, "expected_old": old, "new": new} for p, old, new in self.entries],
        }


@dataclass(frozen=True)
class ControlIntent:
    kind: IntentKind
    tool_request: ToolRequest | None = None      # CONTINUE
    proposal: ProposalDraft | None = None        # ASK_HUMAN (action needed)
    text: str | None = None                      # ASK_HUMAN question/answer, STOP summary

    def __post_init__(self):
        if self.kind is IntentKind.CONTINUE:
            if self.tool_request is None or self.proposal is not None:
                raise AgentProtocolError("CONTINUE carries exactly one tool request and nothing else")
        elif self.kind is IntentKind.ASK_HUMAN:
            if self.tool_request is not None:
                raise AgentProtocolError("ASK_HUMAN cannot carry a tool request")
            if self.proposal is None and not self.text:
                raise AgentProtocolError("ASK_HUMAN needs a proposal draft or question text")
        else:  # STOP
            if self.tool_request is not None or self.proposal is not None:
                raise AgentProtocolError("STOP carries only a summary")

    def to_dict(self) -> dict:
        doc: dict = {"kind": self.kind.value}
        if self.tool_request is not None:
            doc["tool_request"] = self.tool_request.to_dict()
        if self.proposal is not None:
            doc["proposal"] = self.proposal.to_dict()
        if self.text is not None:
            doc["text"] = self.text
        return doc


@dataclass(frozen=True)
class ToolResult:
    tool: ToolKind
    ok: bool
    payload: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        tool = self.tool.value if isinstance(self.tool, ToolKind) else repr(self.tool)
        doc = {"tool": tool, "ok": self.ok, "payload": self.payload}
        if self.error is not None:
            doc["error"] = self.error
        return doc


class HumanInputKind(Enum):
    TEXT = "TEXT"
    APPROVAL = "APPROVAL"


@dataclass(frozen=True)
class ApprovalOutcome:
    decision: str  # APPROVED / REJECTED
    proposal_id: str
    applied: bool = False
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HumanInput:
    kind: HumanInputKind
    text: str = ""
    approval: ApprovalOutcome | None = None


@dataclass(frozen=True)
class StepView:
    """What an agent gets to see of one prior step."""

    index: int
    mode: Mode
    explanation: str
    tool_result: ToolResult | None = None


@dataclass(frozen=True)
class AgentContext:
    """Bounded, deterministically rendered view of the cycle so far."""

    batch_summary: dict
    steps: tuple[StepView, ...]
    pending_human: HumanInput | None = None

    def tool_results(self, tool: ToolKind | None = None) -> list[ToolResult]:
        results = [s.tool_result for s in self.steps if s.tool_result is not None]
        if tool is not None:
            results = [r for r in results if r.tool is tool]
        return results

    def render(self) -> str:
        """Deterministic text rendering, truncated to the most recent chars."""
        parts = ["## Event batch", json.dumps(self.batch_summary, sort_keys=True)]
        for step in self.steps:
            parts.append(f"## Step {step.index} [{step.mode.value}]")
            parts.append(step.explanation)
            if step.tool_result is not None:
                parts.append(json.dumps(step.tool_result.to_dict(), sort_keys=True))
        if self.pending_human is not None:
            parts.append("## Operator input")
            if self.pending_human.kind is HumanInputKind.TEXT:
                parts.append(self.pending_human.text)
            else:
                outcome = self.pending_human.approval
                parts.append(json.dumps(
                    {"decision": outcome.decision, "proposal_id": outcome.proposal_id,
                     "applied": outcome.applied, "detail": outcome.detail},
                    sort_keys=True,
                ))
        text = "\n".join(parts)
        return text[-CONTEXT_RENDER_MAX_CHARS:]


@dataclass(frozen=True)
class AgentOutput:
    explanation: str
    intent: ControlIntent

    def __post_init__(self):
        if not self.explanation or not self.explanation.strip():
            raise AgentProtocolError("explanation must be non-empty")
