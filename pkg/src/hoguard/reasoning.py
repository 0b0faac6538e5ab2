"""Loop-driven reasoning orchestrator with two-layer termination.

A cycle starts in EVENT mode on one event batch.  Every agent invocation
yields exactly one step; tool-bearing steps (NEXT) are capped, human turns
are not, and STOP is absorbing.  All evidence flows through the tool
gateway, which can only reach read paths: no agent output can mutate
configuration, only an operator decision can.
"""

from __future__ import annotations

import logging
import re
import time as _time
from dataclasses import dataclass, field
from typing import Callable

from .config_store import (
    Actor,
    AuditAction,
    AuditLog,
    ConfigPatch,
    ConfigPath,
    ConfigService,
    InvalidPatch,
    PatchEntry,
    PathNotFound,
    digest_of,
)
from .pipeline import EventBatch
from .protocol import (
    AgentContext,
    AgentOutput,
    AgentProtocolError,
    ApprovalOutcome,
    ConfigScope,
    ControlIntent,
    HumanInput,
    HumanInputKind,
    IntentKind,
    Mode,
    StepView,
    ToolKind,
    ToolRequest,
    ToolResult,
)
from .telemetry import InvalidQuery, LogQuery, LogStore, MetricQuery, MetricStore, UnknownSeries

logger = logging.getLogger(__name__)

DEFAULT_ITERATION_CAP = 5
DEFAULT_PROTOCOL_RETRIES = 2

# regular-language check for a completed cycle's mode trace
MODE_GRAMMAR = re.compile(r"^EVENT (NEXT )*(HUMAN )*STOP$")


class CycleConflict(Exception):
    """Another active cycle already covers an overlapping UE context."""


class NotParked(Exception):
    pass


class GateRejected(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"gate rejected: {reason}")


class ToolGateway:
    """Whitelisted, validated, audited read-only access to the stores.

    Holds only query handles; configuration mutation is structurally
    unreachable from here no matter what an agent sends.
    """

    def __init__(
        self,
        logs: LogStore,
        metrics: MetricStore,
        config_read: Callable[[ConfigPath, Actor], tuple[float | int, int]],
        audit: AuditLog,
    ):
        self._logs = logs
        self._metrics = metrics
        self._config_read = config_read
        self._audit = audit

    def dispatch(self, request: ToolRequest) -> ToolResult:
        """Route one validated request; rejections come back as results."""
        try:
            result = self._route(request)
        except GateRejected as exc:
            result = ToolResult(tool=request.tool, ok=False, error=exc.reason)
        tool_name = request.tool.value if isinstance(request.tool, ToolKind) else repr(request.tool)
        self._audit.record(
            Actor.AGENT,
            AuditAction.TOOL_DISPATCH,
            tool_name,
            {"request": request.to_dict(), "result": result.to_dict()},
        )
        return result

    def _route(self, request: ToolRequest) -> ToolResult:
        if not isinstance(request.tool, ToolKind):
            raise GateRejected(f"tool not in whitelist: {request.tool!r}")
        try:
            if request.tool is ToolKind.LOG_QUERY:
                if not isinstance(request.params, LogQuery):
                    raise GateRejected("LOG_QUERY needs LogQuery params")
                res = self._logs.query(request.params)
                return ToolResult(
                    tool=request.tool,
                    ok=True,
                    payload={
                        "records": [r.to_dict() for r in res.records],
                        "truncated": res.truncated,
                    },
                )
            if request.tool is ToolKind.METRIC_QUERY:
                if not isinstance(request.params, MetricQuery):
                    raise GateRejected("METRIC_QUERY needs MetricQuery params")
                points = self._metrics.query(request.params)
                return ToolResult(
                    tool=request.tool,
                    ok=True,
                    payload={"points": [{"time_s": p.time_s, "value": p.value} for p in points]},
                )
            if request.tool is ToolKind.CONFIG_GET:
                if not isinstance(request.params, ConfigScope):
                    raise GateRejected("CONFIG_GET needs ConfigScope params")
                values: dict[str, float | int] = {}
                version = 0
                for scope in request.params.paths:
                    for leaf_path in ConfigPath.parse_scope(scope):
                        value, version = self._config_read(ConfigPath.parse(leaf_path), Actor.AGENT)
                        values[leaf_path] = value
                return ToolResult(tool=request.tool, ok=True, payload={"values": values, "version": version})
            raise GateRejected(f"tool not in whitelist: {request.tool!r}")
        except (InvalidQuery, UnknownSeries, PathNotFound, ValueError) as exc:
            raise GateRejected(str(exc)) from None


@dataclass
class ReasoningStep:
    index: int
    mode: Mode
    explanation: str
    intent: ControlIntent
    timestamp: float
    tool_result: ToolResult | None = None
    tool_result_digest: str | None = None
    proposal_id: str | None = None
    forced: bool = False

    def annotation(self) -> str | None:
        """Label used in the mode trace: tool name, proposal, or answer."""
        if self.mode is Mode.NEXT and self.intent.tool_request is not None:
            tool = self.intent.tool_request.tool
            return tool.value if isinstance(tool, ToolKind) else repr(tool)
        if self.mode is Mode.HUMAN:
            return "proposal" if self.proposal_id else "answer"
        return None

    def to_dict(self) -> dict:
        doc = {
            "index": self.index,
            "mode": self.mode.value,
            "explanation": self.explanation,
            "intent": self.intent.to_dict(),
            "forced": self.forced,
        }
        if self.tool_result_digest is not None:
            doc["tool_result_digest"] = self.tool_result_digest
        if self.proposal_id is not None:
            doc["proposal_id"] = self.proposal_id
        return doc


@dataclass
class ReasoningCycle:
    cycle_id: str
    batch: EventBatch
    agent: object
    cap: int = DEFAULT_ITERATION_CAP
    iteration: int = 0
    mode: Mode = Mode.EVENT
    steps: list[ReasoningStep] = field(default_factory=list)
    parked_for_human: bool = False
    pending_human: HumanInput | None = None
    proposal_ids: list[str] = field(default_factory=list)
    tool_dispatches: int = 0

    @property
    def done(self) -> bool:
        return self.mode is Mode.STOP

    def mode_trace(self) -> list[tuple[str, str | None]]:
        """EVENT at cycle start, then the mode each step moved the cycle to."""
        return [("EVENT", None)] + [(s.mode.value, s.annotation()) for s in self.steps]

    def mode_trace_valid(self) -> bool:
        if not self.done:
            return False
        text = " ".join(mode for mode, _ in self.mode_trace())
        return MODE_GRAMMAR.match(text) is not None


class Orchestrator:
    """Owns cycles: context building, stepping, gating, human resumption."""

    def __init__(
        self,
        gateway: ToolGateway,
        config_service: ConfigService,
        clock: Callable[[], float] | None = None,
        protocol_retries: int = DEFAULT_PROTOCOL_RETRIES,
    ):
        self.gateway = gateway
        self.config = config_service
        self._clock = clock or _time.time
        self._retries = protocol_retries
        self._cycle_seq = 0
        self._active: dict[str, frozenset[int]] = {}  # cycle_id -> UE context key
        # called with (cycle, step) after each recorded step, e.g. to push
        # chat entries to a console
        self.step_listeners: list[Callable[[ReasoningCycle, ReasoningStep], None]] = []

    # -- cycle lifecycle ----------------------------------------------------

    def start_cycle(self, batch: EventBatch, agent, cap: int = DEFAULT_ITERATION_CAP) -> ReasoningCycle:
        """Open a cycle in EVENT mode; one active cycle per UE context.

        Raises:
            CycleConflict: an active cycle's UE set overlaps this batch's.
        """
        ue_key = batch.ue_ids
        for other_id, other_key in self._active.items():
            if other_key & ue_key:
                raise CycleConflict(f"cycle {other_id} already covers UEs {sorted(other_key & ue_key)}")
        self._cycle_seq += 1
        cycle = ReasoningCycle(
            cycle_id=f"cycle-{self._cycle_seq}",
            batch=batch,
            agent=agent,
            cap=cap,
        )
        self._active[cycle.cycle_id] = ue_key
        logger.info("started %s on %s (cap %d)", cycle.cycle_id, batch.batch_id, cap)
        return cycle

    def run_cycle(self, cycle: ReasoningCycle) -> ReasoningCycle:
        """Drive steps until the cycle stops or parks for a human."""
        while not cycle.done and not cycle.parked_for_human:
            self.step(cycle)
        return cycle

    def build_context(self, cycle: ReasoningCycle) -> AgentContext:
        events_by_ue: dict[str, dict[str, list[float]]] = {}
        counts: dict[str, dict[str, int]] = {}
        cells: dict[str, int] = {}
        for event in cycle.batch.events:
            ue = str(event.ue_id)
            events_by_ue.setdefault(ue, {}).setdefault(event.kind.value, []).append(event.time_s)
            counts.setdefault(ue, {}).setdefault(event.kind.value, 0)
            counts[ue][event.kind.value] += 1
            for cell_key, gnb_key in (("source_cell", "source_gnb"), ("target_cell", "target_gnb")):
                gnb = event.aux.get(gnb_key)
                if gnb is not None:
                    cells[str(getattr(event, cell_key))] = int(gnb)
        times = [e.time_s for e in cycle.batch.events]
        summary = {
            "batch_id": cycle.batch.batch_id,
            "time_span": [min(times), max(times)],
            "counts": counts,
            "events": events_by_ue,
            "cells": cells,
        }
        views = tuple(
            StepView(index=s.index, mode=s.mode, explanation=s.explanation, tool_result=s.tool_result)
            for s in cycle.steps
        )
        return AgentContext(batch_summary=summary, steps=views, pending_human=cycle.pending_human)

    # -- stepping -----------------------------------------------------------

    def step(self, cycle: ReasoningCycle) -> ReasoningCycle:
        """One agent invocation and its consequences.

        Raises:
            ValueError: the cycle is stopped or parked.
        """
        if cycle.done:
            raise ValueError(f"{cycle.cycle_id} already stopped")
        if cycle.parked_for_human:
            raise ValueError(f"{cycle.cycle_id} is parked for human input")
        ctx = self.build_context(cycle)
        output, failure = self._invoke_with_retries(cycle, ctx)
        if output is None:
            self._escalate_protocol_failure(cycle, failure)
            return cycle
        self._apply_output(cycle, output)
        return cycle

    def _invoke_with_retries(self, cycle, ctx) -> tuple[AgentOutput | None, str]:
        last_error = ""
        for _ in range(1 + self._retries):
            try:
                output = cycle.agent.analyze(ctx)
                if not isinstance(output, AgentOutput):
                    raise AgentProtocolError(f"agent returned {type(output).__name__}")
                self._validate_intent(cycle, output.intent)
                return output, ""
            except AgentProtocolError as exc:
                last_error = str(exc)
                logger.warning("%s: agent protocol error, retrying: %s", cycle.cycle_id, exc)
        return None, last_error

    def _validate_intent(self, cycle: ReasoningCycle, intent: ControlIntent) -> None:
        # once the cycle has asked a human, evidence gathering is over
        if cycle.mode is Mode.HUMAN and intent.kind is IntentKind.CONTINUE:
            raise AgentProtocolError("CONTINUE is not valid after HUMAN mode")
        if intent.kind is IntentKind.CONTINUE:
            params = intent.tool_request.params
            if isinstance(params, (LogQuery, MetricQuery)):
                try:
                    params.validate()
                except InvalidQuery as exc:
                    raise AgentProtocolError(str(exc)) from None

    def _apply_output(self, cycle: ReasoningCycle, output: AgentOutput) -> None:
        intent = output.intent
        if intent.kind is IntentKind.STOP:
            self._append_step(cycle, Mode.STOP, output.explanation, intent)
            self._finish(cycle)
        elif intent.kind is IntentKind.CONTINUE:
            if cycle.iteration >= cycle.cap:
                self._append_step(
                    cycle, Mode.STOP,
                    output.explanation + " [terminated by orchestrator: iteration cap reached]",
                    ControlIntent(kind=IntentKind.STOP, text="iteration cap reached"),
                    forced=True,
                )
                self._finish(cycle)
                return
            result = self.gateway.dispatch(intent.tool_request)
            cycle.iteration += 1
            cycle.tool_dispatches += 1
            cycle.mode = Mode.NEXT
            self._append_step(cycle, Mode.NEXT, output.explanation, intent, tool_result=result)
        else:  # ASK_HUMAN
            proposal_id = None
            if intent.proposal is not None:
                proposal_id = self._register_proposal(cycle, intent)
                if proposal_id is None:
                    return  # invalid draft already escalated
            cycle.mode = Mode.HUMAN
            cycle.parked_for_human = True
            cycle.pending_human = None
            self._append_step(cycle, Mode.HUMAN, output.explanation, intent, proposal_id=proposal_id)

    def _register_proposal(self, cycle: ReasoningCycle, intent: ControlIntent) -> str | None:
        try:
            patch = ConfigPatch(entries=tuple(
                PatchEntry(path=ConfigPath.parse(p), expected_old=old, new=new)
                for p, old, new in intent.proposal.entries
            ))
            proposal = self.config.propose(patch, intent.proposal.rationale, cycle.cycle_id)
        except (InvalidPatch, ValueError) as exc:
            self._escalate_protocol_failure(cycle, f"proposal draft rejected: {exc}")
            return None
        cycle.proposal_ids.append(proposal.proposal_id)
        return proposal.proposal_id

    def _escalate_protocol_failure(self, cycle: ReasoningCycle, reason: str) -> None:
        """After exhausted retries, park for the operator instead of failing silent."""
        question = (
            f"The reasoning backend repeatedly produced invalid output ({reason}). "
            f"Operator guidance is needed: reply to resume or reject the cycle."
        )
        cycle.mode = Mode.HUMAN
        cycle.parked_for_human = True
        cycle.pending_human = None
        self._append_step(
            cycle, Mode.HUMAN, question,
            ControlIntent(kind=IntentKind.ASK_HUMAN, text=question),
        )
        logger.warning("%s escalated to HUMAN after protocol failures: %s", cycle.cycle_id, reason)

    def _append_step(self, cycle: ReasoningCycle, mode: Mode, explanation: str,
                     intent: ControlIntent, tool_result: ToolResult | None = None,
                     proposal_id: str | None = None, forced: bool = False) -> ReasoningStep:
        step = ReasoningStep(
            index=len(cycle.steps),
            mode=mode,
            explanation=explanation,
            intent=intent,
            timestamp=self._clock(),
            tool_result=tool_result,
            tool_result_digest=digest_of(tool_result.to_dict()) if tool_result else None,
            proposal_id=proposal_id,
            forced=forced,
        )
        cycle.steps.append(step)
        self.config.audit.record(
            Actor.AGENT, AuditAction.STEP, f"{cycle.cycle_id}/step-{step.index}", step.to_dict(),
        )
        for listener in self.step_listeners:
            listener(cycle, step)
        return step

    def _finish(self, cycle: ReasoningCycle) -> None:
        cycle.mode = Mode.STOP
        cycle.parked_for_human = False
        self._active.pop(cycle.cycle_id, None)
        logger.info("%s stopped after %d steps (%d tool dispatches)",
                    cycle.cycle_id, len(cycle.steps), cycle.tool_dispatches)

    # -- human interaction ----------------------------------------------------

    def resume_with_human_input(self, cycle: ReasoningCycle, human: HumanInput) -> ReasoningCycle:
        """Feed an operator turn to a parked cycle and take one step.

        Human turns never consume the iteration cap.

        Raises:
            NotParked: the cycle is not waiting for a human.
        """
        if not cycle.parked_for_human:
            raise NotParked(f"{cycle.cycle_id} is not parked")
        cycle.parked_for_human = False
        cycle.pending_human = human
        ctx = self.build_context(cycle)
        output, failure = self._invoke_with_retries(cycle, ctx)
        cycle.pending_human = None
        if output is None:
            self._escalate_protocol_failure(cycle, failure)
            return cycle
        self._apply_output(cycle, output)
        return cycle

    def decide_and_resume(self, cycle: ReasoningCycle, proposal_id: str,
                          approve: bool, operator: str) -> ReasoningCycle:
        """Operator decision path: decide, apply if approved, resume the cycle."""
        proposal = self.config.decide(proposal_id, approve, operator)
        outcome = ApprovalOutcome(decision=proposal.status.value, proposal_id=proposal_id)
        if approve:
            report = self.config.apply(proposal_id)
            outcome = ApprovalOutcome(
                decision="APPROVED",
                proposal_id=proposal_id,
                applied=True,
                detail={
                    "new_version": report.new_version,
                    "entries": [
                        {"path": e.path, "old": e.old, "new": e.new, "readback": e.readback}
                        for e in report.entries
                    ],
                },
            )
        return self.resume_with_human_input(
            cycle, HumanInput(kind=HumanInputKind.APPROVAL, approval=outcome),
        )


def export_cycle_trace(cycle: ReasoningCycle) -> str:
    """Newline-delimited JSON records of the cycle's steps for offline audit."""
    import json

    lines = [json.dumps({"cycle_id": cycle.cycle_id, "batch_id": cycle.batch.batch_id,
                         "cap": cycle.cap, "mode": cycle.mode.value})]
    lines += [json.dumps(s.to_dict()) for s in cycle.steps]
    return "\n".join(lines)
