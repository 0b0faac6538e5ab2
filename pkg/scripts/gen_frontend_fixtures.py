"""Regenerate the operator-console test fixtures from a real service flow.

Drives the live AppState (pipeline, orchestrator, rule agent, chat hub)
through the canonical burst -> proposal -> approve flow, then dumps the
chat stream, audit, proposals, and config documents the console tests
replay. Also runs the reference experiment for the dashboard report.

Usage: python3 scripts/gen_frontend_fixtures.py [outdir]
"""

import json
import sys
import time
from pathlib import Path

from hoguard.experiment import RunMode, run_experiment
from hoguard.pipeline import BatchPolicy, EventSource, RawEvent
from hoguard.scenario import reference_scenario
from hoguard.service import AppState, ServiceConfig
from hoguard.telemetry import LogRecord


def burst_payloads():
    for i in range(6):
        source, target = (1, 2) if i % 2 == 0 else (2, 1)
        t = 10.0 + 2.0 * i
        for kind in ("A3_TRIGGER", "HO_SUCCESS"):
            doc = {
                "schema_version": 1, "time_s": t, "ue_id": 17, "kind": kind,
                "source_cell": source, "target_cell": target,
                "rsrp_serving_dbm": -80.0, "rsrp_neighbor_dbm": -75.7,
                "source_gnb": 30 if source == 1 else 31,
                "target_gnb": 31 if target == 2 else 30,
            }
            if kind == "A3_TRIGGER":
                doc["a3_offset_db"] = 2.0
                doc["a3_hysteresis_db"] = 2.0
            yield doc


def main(outdir: Path) -> None:
    state = AppState(ServiceConfig(
        scenario=reference_scenario(),
        batch_policy=BatchPolicy(quiescence_ms=100, max_count=50),
    ))
    now_ms = int(time.time() * 1000)
    from hoguard.pipeline import normalize

    for i, payload in enumerate(burst_payloads()):
        raw = RawEvent(source=EventSource.EXTERNAL, payload=payload, received_at=now_ms + i)
        event = state.pipeline.submit_raw(raw)
        state.logs.append(LogRecord(
            time_s=event.time_s, ue_id=event.ue_id, kind=event.kind,
            source_cell=event.source_cell, target_cell=event.target_cell,
            detail="fixture", trigger_margin_db=event.trigger_margin_db))
    # batch + cycle without the background thread, deterministically
    batch = state.pipeline.poll_batch(state.config.batch_policy, now_ms=now_ms + 10_000)
    assert batch is not None
    state.batches.append(batch)
    cycle = state.orchestrator.start_cycle(batch, state.agent, cap=5)
    state.cycles.append(cycle)
    state.orchestrator.run_cycle(cycle)

    state.operator_chat("What configuration values do you recommend?")
    pid = state.config_service.proposals()[0].proposal_id
    state.decide(pid, approve=True, operator="console-operator")

    entries = state.chat.history()
    (outdir / "stream.ndjson").write_text(
        "\n".join(json.dumps(e) for e in entries) + "\n")
    (outdir / "audit.json").write_text(json.dumps(
        {"records": [r.to_dict() for r in state.audit.records()]}, indent=2))
    (outdir / "proposals.json").write_text(json.dumps(
        {"proposals": [p.to_dict() for p in state.config_service.proposals()]}, indent=2))
    (outdir / "config.json").write_text(json.dumps(
        {"version": state.config_service.version(),
         "tree": state.config_service.export_tree()}, indent=2))

    report = run_experiment(reference_scenario(42), RunMode.WITH_RAPP, auto_approve=True)
    (outdir / "report.json").write_text(json.dumps(report.to_document(), indent=2))
    print(f"fixtures written to {outdir}: {len(entries)} chat entries, "
          f"{len(state.audit.records())} audit records")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "frontend/fixtures"))
