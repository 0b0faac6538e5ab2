"""Headless experiment runner: baseline and with-rApp trials over one scenario.

The with-rApp run replays the full loop on a simulated clock: phase one is
simulated with the misconfigured A3 preset, its events flow through the
normalization pipeline into batches, each batch drives a reasoning cycle,
a (scripted or live) operator approves the proposed patch, and phase two
re-simulates with whatever the config service then holds.  Everything is
driven by counters and the simulated clock, so identical scenario + seed
give byte-identical result sections.
"""

from __future__ import annotations

import json
import logging
import time as _time
from dataclasses import dataclass, field
from enum import Enum

from .agents import RuleAgent
from .config_store import AuditLog, ConfigService
from .pipeline import EventPipeline, EventSource, RawEvent
from .protocol import HumanInput, HumanInputKind
from .reasoning import CycleConflict, Orchestrator, ReasoningCycle, ToolGateway
from .scenario import ScenarioSpec
from .sim import ScenarioOutput, count_ping_pongs, run_scenario
from .telemetry import LogRecord, LogStore, MetricSeries, MetricStore

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
SCRIPTED_OPERATOR = "scripted-operator"
SCRIPTED_QUESTION = "What configuration values do you recommend?"
MAX_SCRIPTED_TURNS = 5


class RunMode(Enum):
    BASELINE = "BASELINE"
    WITH_RAPP = "WITH_RAPP"


class RunStatus(Enum):
    COMPLETED = "COMPLETED"
    AWAITING_APPROVAL = "AWAITING_APPROVAL"


class SimClock:
    """Monotone simulated clock; time only moves forward."""

    def __init__(self, start_s: float = 0.0):
        self._now = start_s

    def now(self) -> float:
        return self._now

    def advance_to(self, t: float) -> None:
        if t > self._now:
            self._now = t


@dataclass
class RunReport:
    scenario_id: str
    mode: RunMode
    status: RunStatus
    seed: int
    result: dict
    meta: dict = field(default_factory=dict)

    def to_document(self) -> dict:
        return {"meta": self.meta, "result": self.result}

    def result_bytes(self) -> bytes:
        """Canonical serialization of the timestamp-free section."""
        return json.dumps(self.result, sort_keys=True).encode("utf-8")


def _phase_summary(spec: ScenarioSpec, out: ScenarioOutput) -> dict:
    interval = spec.crossing_interval_s
    handovers = [
        {
            "time_s": h.time_s,
            "ue_id": h.ue_id,
            "source_cell": h.source_cell,
            "target_cell": h.target_cell,
            "outcome": h.outcome.value,
            "trigger_margin_db": h.trigger_margin_db,
        }
        for h in out.handovers
    ]
    in_interval = (
        [h for h in out.handovers if interval[0] <= h.time_s <= interval[1]]
        if interval is not None
        else out.handovers
    )
    return {
        "a3_by_cell": {
            str(cell_id): {"offset_db": a3.offset_db, "hysteresis_db": a3.hysteresis_db, "ttt_ms": a3.ttt_ms}
            for cell_id, a3 in sorted(out.a3_by_cell.items())
        },
        "event_count": len(out.events),
        "handovers": handovers,
        "ping_pong_count": count_ping_pongs(out.handovers),
        "ping_pong_count_in_interval": count_ping_pongs(in_interval),
        "fps": [[k, fps] for k, fps in out.fps.samples],
        "nominal_fps": out.fps.nominal_fps,
    }


def _store_phase_telemetry(out: ScenarioOutput, logs: LogStore, metrics: MetricStore) -> None:
    for event in out.events:
        logs.append(LogRecord(
            time_s=event.time_s,
            ue_id=event.ue_id,
            kind=event.kind,
            source_cell=event.source_cell,
            target_cell=event.target_cell,
            detail=f"{event.kind.value} cell {event.source_cell}->{event.target_cell}",
            trigger_margin_db=event.trigger_margin_db,
        ))
    for sample in out.radio:
        for cell_id, value in sample.rsrp_dbm.items():
            metrics.add_point(MetricSeries.RSRP, sample.time_s, value, cell_id=cell_id)
    metrics.add_points(MetricSeries.FPS, [(float(k), fps) for k, fps in out.fps.samples])


class ScriptedOperator:
    """Replays the canonical two-turn approval dialogue against a parked cycle."""

    def __init__(self, orchestrator: Orchestrator):
        self._orch = orchestrator

    def handle(self, cycle: ReasoningCycle) -> list[dict]:
        turns = []
        for _ in range(MAX_SCRIPTED_TURNS):
            if not cycle.parked_for_human:
                break
            pending = [
                pid for pid in cycle.proposal_ids
                if self._orch.config.get_proposal(pid).status.value == "PENDING"
            ]
            if pending:
                last_step = cycle.steps[-1]
                if last_step.proposal_id:
                    # first turn: ask for the recommendation, like the console would
                    turns.append({"operator": SCRIPTED_OPERATOR, "text": SCRIPTED_QUESTION})
                    self._orch.resume_with_human_input(
                        cycle, HumanInput(kind=HumanInputKind.TEXT, text=SCRIPTED_QUESTION))
                    continue
                turns.append({"operator": SCRIPTED_OPERATOR, "text": "Approve."})
                self._orch.decide_and_resume(cycle, pending[0], approve=True, operator=SCRIPTED_OPERATOR)
                continue
            # parked without a pending proposal (escalation): acknowledge and stop
            turns.append({"operator": SCRIPTED_OPERATOR, "text": "Acknowledged; please stop."})
            self._orch.resume_with_human_input(
                cycle, HumanInput(kind=HumanInputKind.TEXT, text="Acknowledged; please stop."))
        return turns


def run_experiment(
    spec: ScenarioSpec,
    mode: RunMode,
    auto_approve: bool = False,
    agent=None,
) -> RunReport:
    """Execute one trial and return its report.

    BASELINE simulates the misconfigured preset with no reasoning.
    WITH_RAPP additionally pushes phase-one events through the pipeline,
    runs reasoning cycles, applies the operator-approved patch, and
    re-simulates.  Without auto_approve (and with no operator attached)
    a parked run ends as AWAITING_APPROVAL with the config untouched.
    """
    spec.validate()
    started = _time.time()
    agent = agent or RuleAgent()
    clock = SimClock(start_s=spec.trajectory.start_s)
    audit = AuditLog(clock=clock.now)
    config = ConfigService(audit=audit)
    for cell in spec.cells:
        config.register_cell(cell.gnb_id, cell.cell_id, spec.misconfigured_a3)
    logs = LogStore()
    metrics = MetricStore()
    gateway = ToolGateway(logs=logs, metrics=metrics, config_read=config.get, audit=audit)
    orchestrator = Orchestrator(gateway=gateway, config_service=config, clock=clock.now)

    misconfig_overrides = {c.cell_id: spec.misconfigured_a3 for c in spec.cells}
    phase_one = run_scenario(spec, a3_overrides=misconfig_overrides, event_id_prefix="evt1")
    _store_phase_telemetry(phase_one, logs, metrics)

    result: dict = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario_id": spec.scenario_id,
        "mode": mode.value,
        "seed": spec.seed,
        "crossing_interval_s": list(spec.crossing_interval_s) if spec.crossing_interval_s else None,
        "phases": {"misconfigured": _phase_summary(spec, phase_one)},
        "cycles": [],
        "operator_turns": [],
        "proposals": [],
        "batches": [],
        "quarantined": 0,
        "config": {},
    }
    status = RunStatus.COMPLETED

    if mode is RunMode.WITH_RAPP:
        status = _run_reasoning_phase(
            spec, phase_one, clock, config, orchestrator, auto_approve, agent, result,
        )
        if status is RunStatus.COMPLETED and config.version() > 0:
            corrected_overrides = {
                c.cell_id: config.a3_config(c.gnb_id, c.cell_id) for c in spec.cells
            }
            phase_two = run_scenario(spec, a3_overrides=corrected_overrides, event_id_prefix="evt2")
            _store_phase_telemetry(phase_two, logs, metrics)
            result["phases"]["corrected"] = _phase_summary(spec, phase_two)

    result["proposals"] = [p.to_dict() for p in config.proposals()]
    result["config"] = {"version": config.version(), "tree": config.export_tree()}
    result["audit"] = [r.to_dict() for r in audit.records()]
    result["status"] = status.value

    report = RunReport(
        scenario_id=spec.scenario_id,
        mode=mode,
        status=status,
        seed=spec.seed,
        result=result,
        meta={
            "created_at_unix": started,
            "runtime_s": _time.time() - started,
        },
    )
    logger.info("run %s/%s finished: %s", spec.scenario_id, mode.value, status.value)
    return report


def _run_reasoning_phase(spec, phase_one, clock, config, orchestrator,
                         auto_approve, agent, result) -> RunStatus:
    pipeline = EventPipeline()
    policy = spec.batch_policy
    poll_period_ms = max(1, policy.quiescence_ms // 4)
    scripted = ScriptedOperator(orchestrator) if auto_approve else None

    batches = []
    pending_batches = []
    cycles: list[ReasoningCycle] = []

    def to_ms(t_s: float) -> int:
        return int(round(t_s * 1000))

    def handle_batch(batch) -> None:
        clock.advance_to(batch.created_at / 1000.0)
        try:
            cycle = orchestrator.start_cycle(batch, agent, cap=spec.iteration_cap)
        except CycleConflict:
            pending_batches.append(batch)
            return
        cycles.append(cycle)
        orchestrator.run_cycle(cycle)
        if cycle.parked_for_human and scripted is not None:
            result["operator_turns"] += scripted.handle(cycle)
        if cycle.done:
            for queued in list(pending_batches):
                pending_batches.remove(queued)
                handle_batch(queued)

    def poll_until(now_ms: int) -> None:
        nonlocal next_poll_ms
        while next_poll_ms <= now_ms:
            batch = pipeline.poll_batch(policy, next_poll_ms)
            if batch is not None:
                batches.append(batch)
                handle_batch(batch)
            next_poll_ms += poll_period_ms

    events = sorted(phase_one.events, key=lambda e: (e.time_s, e.event_id))
    first_ms = to_ms(events[0].time_s) if events else 0
    next_poll_ms = first_ms
    for event in events:
        event_ms = to_ms(event.time_s)
        poll_until(event_ms)
        clock.advance_to(event.time_s)
        raw = RawEvent(source=EventSource.SIM, payload=event.to_payload(), received_at=event_ms)
        pipeline.submit_raw(raw)
    # flush: keep polling until the queue drains
    while pipeline.depth() > 0:
        poll_until(next_poll_ms + poll_period_ms)
    result["quarantined"] = len(pipeline.quarantined())
    result["batches"] = [
        {
            "batch_id": b.batch_id,
            "trigger_reason": b.trigger_reason.value,
            "created_at_ms": b.created_at,
            "event_ids": [e.event_id for e in b.events],
        }
        for b in batches
    ]
    result["cycles"] = [
        {
            "cycle_id": c.cycle_id,
            "batch_id": c.batch.batch_id,
            "cap": c.cap,
            "iteration": c.iteration,
            "tool_dispatches": c.tool_dispatches,
            "mode": c.mode.value,
            "mode_trace": [[m, a] for m, a in c.mode_trace()],
            "steps": [s.to_dict() for s in c.steps],
            "proposal_ids": list(c.proposal_ids),
        }
        for c in cycles
    ]
    if any(c.parked_for_human for c in cycles) or pending_batches:
        return RunStatus.AWAITING_APPROVAL
    return RunStatus.COMPLETED
