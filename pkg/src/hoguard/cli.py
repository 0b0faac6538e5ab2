"""Command line entry point: run experiments, serve the API, replay traces."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiment import RunMode, run_experiment
from .scenario import load_scenario, reference_scenario, save_scenario

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoguard", description="ping-pong handover analyzer")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario headlessly")
    run.add_argument("--scenario", required=True,
                     help="scenario JSON file, or 'reference' for the bundled one")
    run.add_argument("--mode", choices=["baseline", "with-rapp"], default="baseline")
    run.add_argument("--auto-approve", action="store_true",
                     help="script the operator turns (ask + approve)")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out", default=None, help="write the report JSON here")

    serve = sub.add_parser("serve", help="start the web service")
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--scenario", default=None, help="scenario file for the live config tree")
    serve.add_argument("--agent", choices=["rule", "remote"], default=None)

    replay = sub.add_parser("replay", help="validate and pretty-print a cycle trace or transcript")
    replay.add_argument("file", help="cycle-trace NDJSON or transcript JSON")

    export = sub.add_parser("export-scenario", help="write the bundled reference scenario to a file")
    export.add_argument("--out", required=True)
    export.add_argument("--seed", type=int, default=42)

    return parser


def _load_spec(ref: str, seed: int | None, parser: argparse.ArgumentParser):
    if ref == "reference":
        return reference_scenario(seed=seed if seed is not None else 42)
    path = Path(ref)
    if not path.exists():
        parser.error(f"scenario file not found: {path}")
    spec = load_scenario(path)
    if seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=seed, scenario_id=f"{spec.scenario_id}-seed{seed}")
    return spec


def cmd_run(args, parser) -> int:
    spec = _load_spec(args.scenario, args.seed, parser)
    mode = RunMode.BASELINE if args.mode == "baseline" else RunMode.WITH_RAPP
    report = run_experiment(spec, mode, auto_approve=args.auto_approve)
    doc = report.to_document()
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"report written to {args.out}")
    summary = {
        "status": report.status.value,
        "phases": {
            name: {
                "ping_pongs": phase["ping_pong_count"],
                "ping_pongs_in_interval": phase["ping_pong_count_in_interval"],
                "handovers": len(phase["handovers"]),
            }
            for name, phase in report.result["phases"].items()
        },
        "config_version": report.result["config"]["version"],
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve

    config = ServiceConfig.from_env()
    if args.port is not None:
        config.port = args.port
    if args.agent is not None:
        config.agent_backend = args.agent.upper()
    if args.scenario is not None:
        config.scenario = load_scenario(args.scenario)
    serve(config)
    return 0


def cmd_replay(args, parser) -> int:
    path = Path(args.file)
    if not path.exists():
        parser.error(f"file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if text.lstrip().startswith("{") and "\n{" not in text.strip():
            return _replay_transcript(json.loads(text))
        return _replay_cycle_trace(text)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"invalid trace file: {exc}", file=sys.stderr)
        return 1


def _replay_cycle_trace(text: str) -> int:
    from .reasoning import MODE_GRAMMAR

    lines = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not lines:
        print("empty trace", file=sys.stderr)
        return 1
    header, steps = lines[0], lines[1:]
    print(f"cycle {header.get('cycle_id')} on {header.get('batch_id')} (cap {header.get('cap')})")
    modes = ["EVENT"] + [s["mode"] for s in steps]
    for step in steps:
        print(f"  [{step['mode']:<5}] #{step['index']} {step['explanation'][:100]}")
    ok = MODE_GRAMMAR.match(" ".join(modes)) is not None
    print(f"mode trace: {' '.join(modes)} -> {'valid' if ok else 'INVALID'}")
    return 0 if ok else 1


def _replay_transcript(doc: dict) -> int:
    from .agents import parse_agent_output

    exchanges = doc["exchanges"]
    for i, exchange in enumerate(exchanges):
        output = parse_agent_output(exchange["response"])
        print(f"  #{i} intent={output.intent.kind.value} {output.explanation[:100]}")
    print(f"{len(exchanges)} exchanges, all parse cleanly")
    return 0


def cmd_export_scenario(args) -> int:
    spec = reference_scenario(seed=args.seed)
    save_scenario(spec, args.out)
    print(f"scenario written to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(asctime)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return cmd_run(args, parser)
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "replay":
            return cmd_replay(args, parser)
        if args.command == "export-scenario":
            return cmd_export_scenario(args)
        parser.error(f"unknown command {args.command}")
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        logger.error("%s", exc)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
