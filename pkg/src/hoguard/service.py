"""Web surface of the rApp: events in, chat and approvals out, runs on demand.

One FastAPI app owns a live pipeline/stores/config-service/orchestrator
plus a background poller that turns batches into reasoning cycles.  The
operator console talks to exactly these endpoints; the chat stream is a
long-lived response of newline-delimited JSON entries.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .agents import HttpBackend, LlmAgent, RemoteEndpoint, RuleAgent
from .config_store import (
    Actor,
    AuditAction,
    AuditLog,
    ConfigService,
    NotApproved,
    NotPending,
    StaleValue,
    UnknownProposal,
)
from .experiment import RunMode, RunStatus, run_experiment
from .pipeline import BatchPolicy, EventPipeline, EventSource, QueueFull, RawEvent
from .protocol import HumanInput, HumanInputKind, Mode
from .reasoning import CycleConflict, NotParked, Orchestrator, ToolGateway
from .scenario import ScenarioSpec, load_scenario, reference_scenario
from .telemetry import LogRecord, LogStore, MetricStore

logger = logging.getLogger(__name__)

ENV_PORT = "HOGUARD_PORT"
ENV_AGENT = "HOGUARD_AGENT"  # RULE | REMOTE
ENV_REMOTE_URL = "HOGUARD_REMOTE_URL"
ENV_REMOTE_MODEL = "HOGUARD_REMOTE_MODEL"
ENV_REMOTE_API_KEY = "HOGUARD_REMOTE_API_KEY"
ENV_REMOTE_TIMEOUT = "HOGUARD_REMOTE_TIMEOUT_S"
ENV_SCENARIO_DIR = "HOGUARD_SCENARIO_DIR"


@dataclass
class ServiceConfig:
    port: int = 8080
    agent_backend: str = "RULE"
    scenario: ScenarioSpec | None = None
    batch_policy: BatchPolicy = field(default_factory=BatchPolicy)
    iteration_cap: int = 5
    poll_interval_s: float | None = None  # default quiescence/4
    scenario_dir: str = "scenarios"

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        cfg = cls()
        cfg.port = int(os.environ.get(ENV_PORT, cfg.port))
        cfg.agent_backend = os.environ.get(ENV_AGENT, cfg.agent_backend).upper()
        cfg.scenario_dir = os.environ.get(ENV_SCENARIO_DIR, cfg.scenario_dir)
        return cfg

    def make_agent(self):
        if self.agent_backend == "REMOTE":
            endpoint = RemoteEndpoint(
                url=os.environ[ENV_REMOTE_URL],
                model=os.environ.get(ENV_REMOTE_MODEL, "generic"),
                api_key=os.environ.get(ENV_REMOTE_API_KEY),
                timeout_s=float(os.environ.get(ENV_REMOTE_TIMEOUT, "30")),
            )
            return LlmAgent(HttpBackend(endpoint), model=endpoint.model)
        return RuleAgent()


class ChatHub:
    """Ordered chat timeline with fan-out to streaming subscribers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: list[dict] = []
        self._subscribers: list[queue.Queue] = []

    def publish(self, author: str, text: str, mode: str | None = None,
                proposal_id: str | None = None, cycle_id: str | None = None,
                step_index: int | None = None) -> dict:
        with self._lock:
            entry = {
                "entry_id": len(self._entries) + 1,
                "author": author,
                "text": text,
                "mode": mode,
                "proposal_id": proposal_id,
                "cycle_id": cycle_id,
                "step_index": step_index,
                "timestamp": time.time(),
            }
            self._entries.append(entry)
            subscribers = list(self._subscribers)
        for sub in subscribers:
            sub.put(entry)
        return entry

    def history(self, after: int = 0) -> list[dict]:
        with self._lock:
            return [e for e in self._entries if e["entry_id"] > after]

    def subscribe(self) -> queue.Queue:
        sub: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: queue.Queue) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)


class AppState:
    """Everything one service instance owns."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.scenario = config.scenario or reference_scenario()
        self.audit = AuditLog()
        self.config_service = ConfigService(audit=self.audit)
        for cell in self.scenario.cells:
            self.config_service.register_cell(cell.gnb_id, cell.cell_id, cell.a3)
        self.pipeline = EventPipeline()
        self.logs = LogStore()
        self.metrics = MetricStore()
        self.gateway = ToolGateway(
            logs=self.logs, metrics=self.metrics,
            config_read=self.config_service.get, audit=self.audit,
        )
        self.orchestrator = Orchestrator(gateway=self.gateway, config_service=self.config_service)
        self.agent = config.make_agent()
        self.chat = ChatHub()
        self.batches: list = []
        self.cycles: list = []
        self.runs: dict[str, dict] = {}
        self._run_seq = 0
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._poller: threading.Thread | None = None
        self.ready = False

        self.orchestrator.step_listeners.append(self._on_step)

    # -- background poller ----------------------------------------------------

    def start(self) -> None:
        self._stop.clear()
        self._poller = threading.Thread(target=self._poll_loop, name="batch-poller", daemon=True)
        self._poller.start()
        self.ready = True
        logger.info("service started (agent=%s)", self.config.agent_backend)

    def stop(self) -> None:
        self._stop.set()
        if self._poller is not None:
            self._poller.join(timeout=2.0)
        self.ready = False

    def _poll_loop(self) -> None:
        period = self.config.poll_interval_s
        if period is None:
            period = self.config.batch_policy.quiescence_ms / 4000.0
        while not self._stop.wait(period):
            try:
                self.poll_once()
            except Exception:
                logger.exception("batch poll failed")

    def poll_once(self) -> None:
        batch = self.pipeline.poll_batch(self.config.batch_policy, now_ms=int(time.time() * 1000))
        if batch is None:
            return
        with self._lock:
            self.batches.append(batch)
        try:
            cycle = self.orchestrator.start_cycle(batch, self.agent, cap=self.config.iteration_cap)
        except CycleConflict:
            logger.warning("batch %s deferred: conflicting active cycle", batch.batch_id)
            for event in batch.events:  # re-queue so the next poll retries
                self.pipeline.ingest(event, now_ms=batch.created_at)
            with self._lock:
                self.batches.pop()
            return
        with self._lock:
            self.cycles.append(cycle)
        self.orchestrator.run_cycle(cycle)

    def _on_step(self, cycle, step) -> None:
        self.chat.publish(
            author="RAPP",
            text=step.explanation,
            mode=step.mode.value,
            proposal_id=step.proposal_id,
            cycle_id=cycle.cycle_id,
            step_index=step.index,
        )

    # -- operator actions -------------------------------------------------------

    def parked_cycle(self):
        with self._lock:
            for cycle in reversed(self.cycles):
                if cycle.parked_for_human:
                    return cycle
        return None

    def cycle_for_proposal(self, proposal_id: str):
        with self._lock:
            for cycle in self.cycles:
                if proposal_id in cycle.proposal_ids:
                    return cycle
        return None

    def operator_chat(self, text: str) -> dict:
        self.chat.publish(author="OPERATOR", text=text)
        cycle = self.parked_cycle()
        if cycle is None:
            return self.chat.publish(author="RAPP", text="No reasoning cycle is awaiting input.", mode=None)
        keyword = text.strip().lower().rstrip(".!")
        if keyword in ("approve", "reject"):
            pending = [
                pid for pid in cycle.proposal_ids
                if self.config_service.get_proposal(pid).status.value == "PENDING"
            ]
            if pending:
                self.decide(pending[0], approve=keyword == "approve", operator="chat-operator")
                return {"routed": "decision", "proposal_id": pending[0]}
        self.orchestrator.resume_with_human_input(
            cycle, HumanInput(kind=HumanInputKind.TEXT, text=text))
        return {"routed": "cycle", "cycle_id": cycle.cycle_id}

    def decide(self, proposal_id: str, approve: bool, operator: str) -> dict:
        cycle = self.cycle_for_proposal(proposal_id)
        if cycle is not None and cycle.parked_for_human:
            self.orchestrator.decide_and_resume(cycle, proposal_id, approve=approve, operator=operator)
        else:
            proposal = self.config_service.decide(proposal_id, approve, operator)
            if approve:
                self.config_service.apply(proposal.proposal_id)
        status = self.config_service.get_proposal(proposal_id).status.value
        return {"proposal_id": proposal_id, "status": status}

    # -- runs ---------------------------------------------------------------------

    def submit_run(self, spec: ScenarioSpec, mode: RunMode, auto_approve: bool) -> str:
        with self._lock:
            self._run_seq += 1
            run_id = f"run-{self._run_seq}"
            self.runs[run_id] = {"status": "RUNNING", "report": None}

        def work():
            try:
                report = run_experiment(spec, mode, auto_approve=auto_approve)
                with self._lock:
                    self.runs[run_id] = {"status": report.status.value, "report": report.to_document()}
            except Exception as exc:
                logger.exception("run %s failed", run_id)
                with self._lock:
                    self.runs[run_id] = {"status": "FAILED", "report": None, "error": str(exc)}

        threading.Thread(target=work, name=run_id, daemon=True).start()
        return run_id


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    from contextlib import asynccontextmanager

    state = AppState(config or ServiceConfig.from_env())

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        state.start()
        try:
            yield
        finally:
            state.stop()

    app = FastAPI(title="hoguard", version="0.1.0", lifespan=lifespan)
    app.state.hoguard = state

    @app.get("/healthz")
    def healthz():
        return {"status": "ok" if state.ready else "starting", "ready": state.ready}

    @app.post("/events")
    async def post_event(request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=400, detail="body must be a JSON document")
        if not isinstance(payload, dict) or not payload:
            raise HTTPException(status_code=400, detail="body must be a non-empty JSON object")
        raw = RawEvent(source=EventSource.EXTERNAL, payload=payload,
                       received_at=int(time.time() * 1000))
        state.audit.record(Actor.ORCHESTRATOR, AuditAction.INGEST, "events", payload)
        try:
            event = state.pipeline.submit_raw(raw)
        except QueueFull as exc:
            return JSONResponse(status_code=429, content={"accepted": False, "reason": str(exc)})
        if event is None:
            return JSONResponse(status_code=202, content={
                "accepted": False, "quarantined": True,
                "queue_depth": state.pipeline.depth(),
            })
        state.logs.append(LogRecord(
            time_s=event.time_s, ue_id=event.ue_id, kind=event.kind,
            source_cell=event.source_cell, target_cell=event.target_cell,
            detail=f"{event.kind.value} via /events",
            trigger_margin_db=event.trigger_margin_db,
        ))
        return JSONResponse(status_code=202, content={
            "accepted": True, "event_id": event.event_id,
            "queue_depth": state.pipeline.depth(),
        })

    @app.get("/batches")
    def get_batches():
        with state._lock:
            batches = list(state.batches)
        return {
            "batches": [
                {
                    "batch_id": b.batch_id,
                    "trigger_reason": b.trigger_reason.value,
                    "created_at_ms": b.created_at,
                    "event_ids": [e.event_id for e in b.events],
                }
                for b in batches
            ]
        }

    @app.post("/chat")
    async def post_chat(request: Request):
        body = await request.json()
        text = body.get("text", "") if isinstance(body, dict) else ""
        if not text.strip():
            raise HTTPException(status_code=400, detail="text required")
        routed = state.operator_chat(text)
        return {"ok": True, "routed": routed}

    @app.get("/chat/stream")
    def chat_stream(after: int = 0):
        def generate():
            sub = state.chat.subscribe()
            try:
                history = state.chat.history(after=after)
                last_sent = history[-1]["entry_id"] if history else after
                for entry in history:
                    yield json.dumps(entry) + "\n"
                while not state._stop.is_set():
                    try:
                        entry = sub.get(timeout=1.0)
                    except queue.Empty:
                        yield json.dumps({"heartbeat": time.time()}) + "\n"
                        continue
                    if entry["entry_id"] > last_sent:
                        last_sent = entry["entry_id"]
                        yield json.dumps(entry) + "\n"
            finally:
                state.chat.unsubscribe(sub)

        return StreamingResponse(generate(), media_type="application/x-ndjson")

    @app.get("/proposals")
    def get_proposals():
        return {"proposals": [p.to_dict() for p in state.config_service.proposals()]}

    @app.post("/proposals/{proposal_id}/approve")
    def approve_proposal(proposal_id: str, operator: str = "console-operator"):
        return _decide(proposal_id, True, operator)

    @app.post("/proposals/{proposal_id}/reject")
    def reject_proposal(proposal_id: str, operator: str = "console-operator"):
        return _decide(proposal_id, False, operator)

    def _decide(proposal_id: str, approve: bool, operator: str):
        try:
            return state.decide(proposal_id, approve=approve, operator=operator)
        except UnknownProposal:
            raise HTTPException(status_code=404, detail=f"unknown proposal {proposal_id}")
        except NotPending as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (NotApproved, StaleValue, NotParked) as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/audit")
    def get_audit():
        return {"records": [r.to_dict() for r in state.audit.records()]}

    @app.get("/config")
    def get_config():
        return {
            "version": state.config_service.version(),
            "tree": state.config_service.export_tree(),
        }

    @app.get("/config/history")
    def get_config_history():
        actions = {AuditAction.PROPOSE.value, AuditAction.DECIDE.value, AuditAction.APPLY.value}
        return {
            "version": state.config_service.version(),
            "records": [r.to_dict() for r in state.audit.records() if r.action.value in actions],
        }

    @app.post("/runs")
    async def post_run(request: Request):
        body = await request.json()
        if not isinstance(body, dict):
            raise HTTPException(status_code=400, detail="body must be a JSON object")
        scenario_ref = body.get("scenario", "reference")
        try:
            if isinstance(scenario_ref, dict):
                spec = ScenarioSpec.from_dict(scenario_ref)
            elif scenario_ref == "reference":
                spec = reference_scenario(seed=int(body.get("seed", 42)))
            else:
                spec = load_scenario(Path(state.config.scenario_dir) / f"{scenario_ref}.json")
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown scenario {scenario_ref!r}")
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"invalid scenario: {exc}")
        try:
            mode = RunMode(body.get("mode", "BASELINE").upper().replace("-", "_"))
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown mode {body.get('mode')!r}")
        run_id = state.submit_run(spec, mode, auto_approve=bool(body.get("auto_approve", False)))
        return JSONResponse(status_code=202, content={"run_id": run_id})

    @app.get("/runs/{run_id}/report")
    def get_run_report(run_id: str):
        with state._lock:
            run = state.runs.get(run_id)
        if run is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        if run["status"] == "RUNNING":
            return JSONResponse(status_code=202, content={"status": "RUNNING"})
        if run["status"] == "FAILED":
            return JSONResponse(status_code=500, content={"status": "FAILED", "error": run.get("error")})
        return {"status": run["status"], "report": run["report"]}

    return app


def serve(config: ServiceConfig | None = None) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    config = config or ServiceConfig.from_env()
    app = create_app(config)
    uvicorn.run(app, host="0.0.0.0", port=config.port, log_level="info")
