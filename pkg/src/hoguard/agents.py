"""Reasoning backends: a deterministic rule agent and a remote-model agent.

The rule agent replays the canonical diagnosis pipeline (detect repeated
handovers, confirm marginal A3 triggers from logs, inspect config, propose
a desensitized A3 patch, await approval) and doubles as the test oracle.
The remote agent sends the rendered context to a text-model endpoint and
parses the reply against a strict schema: anything that doesn't match
exactly is a ParseFailure, never a guess.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .config_store import ConfigPath, digest_of
from .pipeline import EventKind
from .protocol import (
    AgentContext,
    AgentOutput,
    AgentProtocolError,
    ConfigScope,
    ControlIntent,
    HumanInputKind,
    IntentKind,
    Mode,
    ProposalDraft,
    ToolKind,
    ToolRequest,
)
from .sim import TTT_ALLOWED_MS, A3Config
from .telemetry import LogQuery, MetricQuery, MetricSeries

logger = logging.getLogger(__name__)


class ParseFailure(AgentProtocolError):
    """Remote response did not match the output schema exactly."""


class RemoteError(AgentProtocolError):
    pass


class AgentTimeout(AgentProtocolError):
    pass


# ---------------------------------------------------------------------------
# rule agent


def recommend_a3(current: A3Config) -> A3Config:
    """Desensitize an A3 config: never decreases any parameter.

    Anchored at (2, 2, 100) -> (4, 4, 320); elsewhere offset and
    hysteresis double (at least +2 dB) and ttt moves to the next allowed
    value >= 3x, which is an extrapolation of the same rule.
    """
    offset = min(15.0, max(current.offset_db * 2, current.offset_db + 2.0))
    hysteresis = max(current.hysteresis_db * 2, current.hysteresis_db + 2.0)
    target = max(current.ttt_ms * 3, 40)
    ttt = next((t for t in TTT_ALLOWED_MS if t >= target), TTT_ALLOWED_MS[-1])
    return A3Config(offset_db=offset, hysteresis_db=hysteresis, ttt_ms=ttt)


@dataclass(frozen=True)
class RuleAgentParams:
    pp_count_threshold: int = 3
    pp_window_s: float = 10.0
    marginal_db: float = 1.0

    def __post_init__(self):
        if self.pp_count_threshold <= 0 or self.pp_window_s <= 0 or self.marginal_db <= 0:
            raise ValueError("rule agent thresholds must be positive")


def _find_suspicious_ue(summary: dict, params: RuleAgentParams) -> tuple[int, float, float] | None:
    """UE with >= threshold handovers inside one sliding window, or None.

    Returns (ue_id, first_time, last_time) over that UE's handover events.
    """
    per_ue = summary.get("events", {})
    for ue_id in sorted(per_ue, key=int):
        times = sorted(per_ue[ue_id].get(EventKind.HO_SUCCESS.value, []))
        if len(times) < params.pp_count_threshold:
            continue
        k = params.pp_count_threshold
        for i in range(len(times) - k + 1):
            if times[i + k - 1] - times[i] <= params.pp_window_s:
                return int(ue_id), times[0], times[-1]
    return None


class RuleAgent:
    """Deterministic staged pipeline keyed on the evidence gathered so far."""

    def __init__(self, params: RuleAgentParams | None = None):
        self.params = params or RuleAgentParams()

    def analyze(self, ctx: AgentContext) -> AgentOutput:
        if ctx.pending_human is not None:
            return self._human_turn(ctx)
        if ctx.tool_results(ToolKind.CONFIG_GET):
            return self._config_stage(ctx)
        if ctx.tool_results(ToolKind.LOG_QUERY):
            return self._log_stage(ctx)
        return self._classify_stage(ctx)

    # stage 1: classify the batch
    def _classify_stage(self, ctx: AgentContext) -> AgentOutput:
        suspect = _find_suspicious_ue(ctx.batch_summary, self.params)
        if suspect is None:
            return AgentOutput(
                explanation="Observed mobility events are consistent with normal behavior; "
                            "no UE shows repeated inter-gNB handovers in a short time window.",
                intent=ControlIntent(kind=IntentKind.STOP, text="normal mobility, no action needed"),
            )
        ue_id, first_t, last_t = suspect
        window = (float(math.floor(first_t)), float(math.ceil(last_t)))
        query = LogQuery(
            ue_id=ue_id,
            time_range=window,
            kinds=frozenset({EventKind.A3_TRIGGER, EventKind.HO_SUCCESS}),
            limit=500,
        )
        return AgentOutput(
            explanation=(
                f"Abnormal mobility detected. Repeated inter-gNB handovers observed for "
                f"UE #{ue_id} within a short time window. This pattern is inconsistent "
                f"with stable mobility behavior. Next: inspect handover logs."
            ),
            intent=ControlIntent(
                kind=IntentKind.CONTINUE,
                tool_request=ToolRequest(tool=ToolKind.LOG_QUERY, params=query),
            ),
        )

    # stage 2: confirm ping-pong from log records
    def _log_stage(self, ctx: AgentContext) -> AgentOutput:
        result = ctx.tool_results(ToolKind.LOG_QUERY)[-1]
        records = result.payload.get("records", []) if result.ok else []
        margins = [
            r["trigger_margin_db"]
            for r in records
            if r.get("kind") == EventKind.A3_TRIGGER.value and r.get("trigger_margin_db") is not None
        ]
        marginal = [m for m in margins if m < self.params.marginal_db]
        if not margins or len(marginal) * 2 < len(margins):
            return AgentOutput(
                explanation="Log inspection completed. Handover log does not show the marginal "
                            "repeated-trigger signature of ping-pong behavior.",
                intent=ControlIntent(kind=IntentKind.STOP, text="no ping-pong signature in logs"),
            )
        cells = ctx.batch_summary.get("cells", {})
        scopes = sorted(
            f"gnb/{gnb_id}/cell/{cell_id}/a3"
            for cell_id, gnb_id in ((int(c), int(g)) for c, g in cells.items())
        )
        return AgentOutput(
            explanation=(
                f"Log inspection completed. Handover logs show repeated A3 triggers caused by "
                f"marginal neighbor-serving differences (<{self.params.marginal_db:g} dB in "
                f"{len(marginal)}/{len(margins)} triggers). This condition is indicative of "
                f"ping-pong handover behavior. Next: inspect A3 configuration."
            ),
            intent=ControlIntent(
                kind=IntentKind.CONTINUE,
                tool_request=ToolRequest(tool=ToolKind.CONFIG_GET, params=ConfigScope(paths=tuple(scopes))),
            ),
        )

    # stage 3: recommend a patch from the inspected config
    def _config_stage(self, ctx: AgentContext) -> AgentOutput:
        result = ctx.tool_results(ToolKind.CONFIG_GET)[-1]
        values = result.payload.get("values", {}) if result.ok else {}
        if not values:
            return AgentOutput(
                explanation="Configuration inspection failed; no values were returned.",
                intent=ControlIntent(kind=IntentKind.STOP, text="config inspection failed"),
            )
        draft = self._draft_from_values(values)
        return AgentOutput(
            explanation=(
                "Configuration inspection completed. Current A3 offset, hysteresis, and "
                "time-to-trigger values are overly sensitive; this increases susceptibility "
                "to ping-pong handovers under marginal signal fluctuations. "
                "Awaiting operator approval of the recommended desensitized values."
            ),
            intent=ControlIntent(kind=IntentKind.ASK_HUMAN, proposal=draft),
        )

    def _draft_from_values(self, values: dict) -> ProposalDraft:
        by_cell: dict[tuple[int, int], dict[str, float | int]] = {}
        for path_str, value in values.items():
            path = ConfigPath.parse(path_str)
            by_cell.setdefault((path.gnb_id, path.cell_id), {})[path.leaf] = value
        entries: list[tuple[str, float | int, float | int]] = []
        changes: list[str] = []
        for (gnb_id, cell_id), leaves in sorted(by_cell.items()):
            current = A3Config(
                offset_db=float(leaves["offset-db"]),
                hysteresis_db=float(leaves["hysteresis-db"]),
                ttt_ms=int(leaves["ttt-ms"]),
            )
            rec = recommend_a3(current)
            prefix = f"gnb/{gnb_id}/cell/{cell_id}/a3"
            entries += [
                (f"{prefix}/offset-db", current.offset_db, rec.offset_db),
                (f"{prefix}/hysteresis-db", current.hysteresis_db, rec.hysteresis_db),
                (f"{prefix}/ttt-ms", current.ttt_ms, rec.ttt_ms),
            ]
            changes.append(
                f"gNB-{gnb_id}: offset {current.offset_db:g}->{rec.offset_db:g} dB, "
                f"hysteresis {current.hysteresis_db:g}->{rec.hysteresis_db:g} dB, "
                f"time-to-trigger {current.ttt_ms}->{rec.ttt_ms} ms"
            )
        rationale = (
            "Reduce handover sensitivity to transient signal variations: "
            + "; ".join(changes)
        )
        return ProposalDraft(entries=tuple(entries), rationale=rationale)

    # stage 4: operator turns
    def _human_turn(self, ctx: AgentContext) -> AgentOutput:
        human = ctx.pending_human
        if human.kind is HumanInputKind.APPROVAL:
            outcome = human.approval
            if outcome.applied:
                return AgentOutput(
                    explanation=(
                        "Configuration update confirmed. A3 parameters have been updated by "
                        "the orchestration layer following operator approval. Observed "
                        "mobility behavior is expected to stabilize."
                    ),
                    intent=ControlIntent(kind=IntentKind.STOP, text="terminate reasoning cycle"),
                )
            return AgentOutput(
                explanation=f"Proposal {outcome.proposal_id} was {outcome.decision.lower()}; "
                            "no configuration change was made.",
                intent=ControlIntent(kind=IntentKind.STOP, text="proposal not applied"),
            )
        # free-text question: answer with the recommendation derived from config
        answer = self._recommendation_text(ctx)
        return AgentOutput(
            explanation=answer,
            intent=ControlIntent(kind=IntentKind.ASK_HUMAN, text=answer),
        )

    def _recommendation_text(self, ctx: AgentContext) -> str:
        configs = ctx.tool_results(ToolKind.CONFIG_GET)
        if not configs or not configs[-1].ok:
            return "No configuration evidence is available yet; awaiting approval of the pending proposal."
        draft = self._draft_from_values(configs[-1].payload.get("values", {}))
        return "Recommended values. " + draft.rationale + ". Awaiting human approval."


# ---------------------------------------------------------------------------
# remote-model agent

SYSTEM_PREAMBLE = """You are a RAN mobility analysis agent operating inside a gated reasoning loop.
Modes: EVENT (classify the batch), NEXT (request one more piece of evidence),
HUMAN (present a proposal or answer the operator), STOP (terminate with a summary).
You may only use these read-only tools: LOG_QUERY, METRIC_QUERY, CONFIG_GET.
You cannot modify configuration; changes happen only through operator-approved proposals.
Reply with exactly one JSON object and nothing else, matching this schema:
{"mode": "EVENT|NEXT|HUMAN|STOP", "explanation": "<non-empty text>",
 "intent": {"type": "CONTINUE", "tool": "LOG_QUERY|METRIC_QUERY|CONFIG_GET", "params": {...}}
         | {"type": "ASK_HUMAN", "question": "<text>"}
         | {"type": "ASK_HUMAN", "proposal": {"rationale": "<text>",
              "entries": [{"path": "gnb/<id>/cell/<id>/a3/<leaf>", "expected_old": <num>, "new": <num>}]}}
         | {"type": "STOP", "summary": "<text>"}}
LOG_QUERY params: {"ue_id": <int|null>, "from_s": <num>, "to_s": <num>, "kinds": [<kind>...]|null, "limit": <int>}.
METRIC_QUERY params: {"series": "RSRP|FPS", "from_s": <num>, "to_s": <num>, "downsample_s": <num>, "cell_id": <int|null>}.
CONFIG_GET params: {"paths": ["gnb/<id>/cell/<id>/a3", ...]}.
"""

_MODE_FOR_INTENT = {"CONTINUE": "NEXT", "ASK_HUMAN": "HUMAN", "STOP": "STOP"}


def parse_agent_output(text: str) -> AgentOutput:
    """Strictly parse a model reply; any schema deviation is ParseFailure."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or set(doc) != {"mode", "explanation", "intent"}:
        raise ParseFailure(f"top-level keys must be exactly mode/explanation/intent, got {sorted(doc) if isinstance(doc, dict) else type(doc).__name__}")
    mode, explanation, intent_doc = doc["mode"], doc["explanation"], doc["intent"]
    if not isinstance(explanation, str) or not explanation.strip():
        raise ParseFailure("explanation must be a non-empty string")
    if not isinstance(intent_doc, dict) or "type" not in intent_doc:
        raise ParseFailure("intent must be an object with a 'type'")
    itype = intent_doc["type"]
    if itype not in _MODE_FOR_INTENT:
        raise ParseFailure(f"unknown intent type {itype!r}")
    if mode not in {m.value for m in Mode} or (mode != "EVENT" and mode != _MODE_FOR_INTENT[itype]):
        raise ParseFailure(f"mode {mode!r} inconsistent with intent {itype!r}")
    try:
        if itype == "CONTINUE":
            intent = ControlIntent(
                kind=IntentKind.CONTINUE,
                tool_request=_parse_tool_request(intent_doc),
            )
        elif itype == "ASK_HUMAN":
            extras = set(intent_doc) - {"type", "question", "proposal"}
            if extras:
                raise ParseFailure(f"unknown ASK_HUMAN keys {sorted(extras)}")
            proposal = None
            if "proposal" in intent_doc:
                proposal = _parse_proposal(intent_doc["proposal"])
            question = intent_doc.get("question")
            if question is not None and not isinstance(question, str):
                raise ParseFailure("question must be a string")
            intent = ControlIntent(kind=IntentKind.ASK_HUMAN, proposal=proposal, text=question)
        else:
            extras = set(intent_doc) - {"type", "summary"}
            if extras:
                raise ParseFailure(f"unknown STOP keys {sorted(extras)}")
            summary = intent_doc.get("summary", "")
            if not isinstance(summary, str):
                raise ParseFailure("summary must be a string")
            intent = ControlIntent(kind=IntentKind.STOP, text=summary)
        return AgentOutput(explanation=explanation, intent=intent)
    except ParseFailure:
        raise
    except AgentProtocolError as exc:
        raise ParseFailure(str(exc)) from None


def _parse_tool_request(doc: dict) -> ToolRequest:
    extras = set(doc) - {"type", "tool", "params"}
    if extras:
        raise ParseFailure(f"unknown CONTINUE keys {sorted(extras)}")
    tool_name = doc.get("tool")
    try:
        tool = ToolKind(tool_name)
    except ValueError:
        raise ParseFailure(f"unknown tool {tool_name!r}") from None
    params = doc.get("params")
    if not isinstance(params, dict):
        raise ParseFailure("params must be an object")
    try:
        if tool is ToolKind.LOG_QUERY:
            kinds = params.get("kinds")
            query = LogQuery(
                ue_id=params.get("ue_id"),
                time_range=(float(params["from_s"]), float(params["to_s"])),
                kinds=frozenset(EventKind(k) for k in kinds) if kinds else None,
                limit=int(params.get("limit", 500)),
            )
            return ToolRequest(tool=tool, params=query)
        if tool is ToolKind.METRIC_QUERY:
            query = MetricQuery(
                series=MetricSeries(params["series"]),
                time_range=(float(params["from_s"]), float(params["to_s"])),
                downsample_s=float(params.get("downsample_s", 1.0)),
                cell_id=params.get("cell_id"),
            )
            return ToolRequest(tool=tool, params=query)
        paths = params.get("paths")
        if not isinstance(paths, list) or not all(isinstance(p, str) for p in paths):
            raise ParseFailure("CONFIG_GET params.paths must be a list of strings")
        return ToolRequest(tool=tool, params=ConfigScope(paths=tuple(paths)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseFailure(f"bad {tool.value} params: {exc}") from None


def _parse_proposal(doc) -> ProposalDraft:
    if not isinstance(doc, dict) or set(doc) != {"rationale", "entries"}:
        raise ParseFailure("proposal must have exactly rationale and entries")
    entries = doc["entries"]
    if not isinstance(entries, list) or not entries:
        raise ParseFailure("proposal entries must be a non-empty list")
    parsed = []
    for e in entries:
        if not isinstance(e, dict) or set(e) != {"path", "expected_old", "new"}:
            raise ParseFailure("each entry needs exactly path/expected_old/new")
        if not isinstance(e["path"], str):
            raise ParseFailure("entry path must be a string")
        for key in ("expected_old", "new"):
            if not isinstance(e[key], (int, float)) or isinstance(e[key], bool):
                raise ParseFailure(f"entry {key} must be numeric")
        parsed.append((e["path"], e["expected_old"], e["new"]))
    rationale = doc["rationale"]
    if not isinstance(rationale, str) or not rationale.strip():
        raise ParseFailure("proposal rationale must be a non-empty string")
    return ProposalDraft(entries=tuple(parsed), rationale=rationale)


@dataclass(frozen=True)
class RemoteEndpoint:
    """Where and how to reach the text-model backend."""

    url: str
    model: str
    api_key: str | None = None
    timeout_s: float = 30.0


@dataclass
class Transcript:
    """Paired request/response records for offline replay."""

    exchanges: list[dict] = field(default_factory=list)

    def add(self, request: dict, response_text: str) -> None:
        self.exchanges.append({
            "request_digest": digest_of(request),
            "request": request,
            "response": response_text,
        })

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"exchanges": self.exchanges}, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(exchanges=list(doc["exchanges"]))


class HttpBackend:
    """Live transport: one blocking request per agent invocation."""

    def __init__(self, endpoint: RemoteEndpoint):
        self.endpoint = endpoint

    def complete(self, request: dict) -> str:
        headers = {}
        if self.endpoint.api_key:
            headers["authorization"] = f"Bearer {self.endpoint.api_key}"
        try:
            resp = httpx.post(
                self.endpoint.url, json=request, headers=headers,
                timeout=self.endpoint.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise AgentTimeout(str(exc)) from None
        except httpx.HTTPError as exc:
            raise RemoteError(str(exc)) from None
        if resp.status_code != 200:
            raise RemoteError(f"endpoint returned {resp.status_code}")
        try:
            return resp.json()["text"]
        except (KeyError, ValueError) as exc:
            raise RemoteError(f"endpoint reply missing 'text': {exc}") from None


class ReplayBackend:
    """Replays a recorded transcript in order, verifying request digests."""

    def __init__(self, transcript: Transcript, verify_digests: bool = True):
        self._exchanges = list(transcript.exchanges)
        self._cursor = 0
        self._verify = verify_digests

    def complete(self, request: dict) -> str:
        if self._cursor >= len(self._exchanges):
            raise RemoteError("transcript exhausted")
        exchange = self._exchanges[self._cursor]
        self._cursor += 1
        if self._verify and exchange.get("request_digest") != digest_of(request):
            raise RemoteError(f"request #{self._cursor} diverged from the recorded transcript")
        return exchange["response"]


class LlmAgent:
    """Agent backed by a remote text model (or a replayed transcript)."""

    def __init__(self, backend, model: str = "generic", record_to: Transcript | None = None):
        self._backend = backend
        self._model = model
        self.transcript = record_to

    def build_request(self, ctx: AgentContext) -> dict:
        return {"model": self._model, "system": SYSTEM_PREAMBLE, "user": ctx.render()}

    def analyze(self, ctx: AgentContext) -> AgentOutput:
        request = self.build_request(ctx)
        response_text = self._backend.complete(request)
        if self.transcript is not None:
            self.transcript.add(request, response_text)
        return parse_agent_output(response_text)
