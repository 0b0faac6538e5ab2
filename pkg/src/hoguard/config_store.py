"""Versioned per-gNB configuration tree with gated, audited mutation.

Reads are path-scoped; writes only ever happen by applying an
operator-approved proposal, compare-and-swap style against the values the
proposer saw.  Every touch of the tree lands in one append-only, gapless
audit log, which is also where the reasoning orchestrator records tool
dispatches and steps.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time as _time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .sim import A3Config

logger = logging.getLogger(__name__)

A3_LEAVES = ("offset-db", "hysteresis-db", "ttt-ms")


class PathNotFound(Exception):
    pass


class InvalidPatch(Exception):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"invalid patch at '{path}': {reason}")


class UnknownProposal(Exception):
    pass


class NotPending(Exception):
    pass


class NotApproved(Exception):
    pass


class StaleValue(Exception):
    def __init__(self, path: str, expected, current):
        self.path = path
        super().__init__(f"stale value at {path}: expected {expected}, current {current}")


@dataclass(frozen=True, order=True)
class ConfigPath:
    """Canonical form gnb/<id>/cell/<id>/a3/<leaf>; round-trips parse/print."""

    gnb_id: int
    cell_id: int
    leaf: str

    def __post_init__(self):
        if self.leaf not in A3_LEAVES:
            raise ValueError(f"unknown leaf '{self.leaf}', expected one of {A3_LEAVES}")

    def __str__(self) -> str:
        return f"gnb/{self.gnb_id}/cell/{self.cell_id}/a3/{self.leaf}"

    @classmethod
    def parse(cls, text: str) -> "ConfigPath":
        parts = text.strip("/").split("/")
        if len(parts) != 6 or parts[0] != "gnb" or parts[2] != "cell" or parts[4] != "a3":
            raise ValueError(f"not a canonical config path: {text!r}")
        try:
            return cls(gnb_id=int(parts[1]), cell_id=int(parts[3]), leaf=parts[5])
        except ValueError as exc:
            raise ValueError(f"not a canonical config path: {text!r}") from exc

    @classmethod
    def parse_scope(cls, text: str) -> list[str]:
        """Accept a leaf path or an a3 subtree prefix; return leaf path strings."""
        parts = text.strip("/").split("/")
        if len(parts) == 5 and parts[0] == "gnb" and parts[2] == "cell" and parts[4] == "a3":
            return [f"{text.rstrip('/')}/{leaf}" for leaf in A3_LEAVES]
        return [str(cls.parse(text))]


def _validate_leaf_value(leaf: str, value) -> float | int:
    if leaf == "ttt-ms":
        from .sim import TTT_ALLOWED_MS

        if not isinstance(value, int) or isinstance(value, bool) or value not in TTT_ALLOWED_MS:
            raise ValueError(f"ttt-ms must be one of {TTT_ALLOWED_MS}, got {value!r}")
        return value
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValueError(f"{leaf} must be numeric, got {value!r}")
    value = float(value)
    if abs(value * 2 - round(value * 2)) > 1e-9:
        raise ValueError(f"{leaf} must be a multiple of 0.5, got {value}")
    if leaf == "offset-db" and not -15.0 <= value <= 15.0:
        raise ValueError(f"offset-db out of [-15, 15]: {value}")
    if leaf == "hysteresis-db" and value < 0:
        raise ValueError(f"hysteresis-db must be >= 0: {value}")
    return value


@dataclass(frozen=True)
class PatchEntry:
    path: ConfigPath
    expected_old: float | int
    new: float | int


@dataclass(frozen=True)
class ConfigPatch:
    entries: tuple[PatchEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise InvalidPatch("(patch)", "empty")
        paths = [str(e.path) for e in self.entries]
        if len(set(paths)) != len(paths):
            raise InvalidPatch("(patch)", f"duplicate paths: {paths}")
        for entry in self.entries:
            try:
                _validate_leaf_value(entry.path.leaf, entry.new)
            except ValueError as exc:
                raise InvalidPatch(str(entry.path), str(exc)) from None


class ProposalStatus(Enum):
    PENDING = "PENDING"
    APPROVED = "APPROVED"
    REJECTED = "REJECTED"
    APPLIED = "APPLIED"
    FAILED = "FAILED"


@dataclass
class Proposal:
    proposal_id: str
    patch: ConfigPatch
    rationale: str
    created_by_cycle: str
    status: ProposalStatus = ProposalStatus.PENDING
    transitions: dict[str, float] = field(default_factory=dict)  # status name -> timestamp
    decided_by: str | None = None

    def to_dict(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "status": self.status.value,
            "rationale": self.rationale,
            "created_by_cycle": self.created_by_cycle,
            "decided_by": self.decided_by,
            "entries": [
                {"path": str(e.path), "expected_old": e.expected_old, "new": e.new}
                for e in self.patch.entries
            ],
        }


class Actor(Enum):
    AGENT = "AGENT"
    OPERATOR = "OPERATOR"
    ORCHESTRATOR = "ORCHESTRATOR"


class AuditAction(Enum):
    GET_CONFIG = "GET_CONFIG"
    PROPOSE = "PROPOSE"
    DECIDE = "DECIDE"
    APPLY = "APPLY"
    TOOL_DISPATCH = "TOOL_DISPATCH"
    STEP = "STEP"
    INGEST = "INGEST"


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    actor: Actor
    action: AuditAction
    subject: str
    digest: str
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "actor": self.actor.value,
            "action": self.action.value,
            "subject": self.subject,
            "digest": self.digest,
            "timestamp": self.timestamp,
        }


def digest_of(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


class AuditLog:
    """Append-only audit trail with a gapless sequence number."""

    def __init__(self, clock: Callable[[], float] | None = None):
        self._lock = threading.Lock()
        self._records: list[AuditRecord] = []
        self._clock = clock or _time.time

    def set_clock(self, clock: Callable[[], float]) -> None:
        self._clock = clock

    def now(self) -> float:
        return self._clock()

    def record(self, actor: Actor, action: AuditAction, subject: str, payload) -> AuditRecord:
        with self._lock:
            rec = AuditRecord(
                seq=len(self._records) + 1,
                actor=actor,
                action=action,
                subject=subject,
                digest=digest_of(payload),
                timestamp=self._clock(),
            )
            self._records.append(rec)
        return rec

    def records(self) -> list[AuditRecord]:
        with self._lock:
            return list(self._records)

    def export_ndjson(self) -> str:
        return "\n".join(json.dumps(r.to_dict()) for r in self.records())


@dataclass(frozen=True)
class ApplyEntryReport:
    path: str
    old: float | int
    new: float | int
    readback: float | int


@dataclass(frozen=True)
class ApplyReport:
    proposal_id: str
    entries: tuple[ApplyEntryReport, ...]
    new_version: int


class ConfigService:
    """The O1-style config authority for all gNBs in a run.

    All mutation is serialized through one lock; apply() is atomic with
    respect to readers, and the global version moves only inside it.
    """

    def __init__(self, audit: AuditLog | None = None):
        self._lock = threading.RLock()
        self._tree: dict[int, dict[int, dict[str, float | int]]] = {}
        self._version = 0
        self._proposals: dict[str, Proposal] = {}
        self._proposal_seq = 0
        self.audit = audit or AuditLog()

    @classmethod
    def from_cells(cls, cells, audit: AuditLog | None = None) -> "ConfigService":
        """Build the tree from CellConfig-like objects (cell_id/gnb_id/a3)."""
        svc = cls(audit=audit)
        for cell in cells:
            svc.register_cell(cell.gnb_id, cell.cell_id, cell.a3)
        return svc

    def register_cell(self, gnb_id: int, cell_id: int, a3: A3Config) -> None:
        with self._lock:
            self._tree.setdefault(gnb_id, {})[cell_id] = {
                "offset-db": a3.offset_db,
                "hysteresis-db": a3.hysteresis_db,
                "ttt-ms": a3.ttt_ms,
            }

    def leaf_paths(self) -> list[str]:
        with self._lock:
            return [
                str(ConfigPath(gnb_id, cell_id, leaf))
                for gnb_id in sorted(self._tree)
                for cell_id in sorted(self._tree[gnb_id])
                for leaf in A3_LEAVES
            ]

    def _resolve(self, path: ConfigPath) -> dict[str, float | int]:
        try:
            return self._tree[path.gnb_id][path.cell_id]
        except KeyError:
            raise PathNotFound(str(path)) from None

    def get(self, path: ConfigPath, actor: Actor = Actor.ORCHESTRATOR) -> tuple[float | int, int]:
        """Current leaf value plus the global config version."""
        with self._lock:
            value = self._resolve(path)[path.leaf]
            version = self._version
        self.audit.record(actor, AuditAction.GET_CONFIG, str(path), {"value": value, "version": version})
        return value, version

    def version(self) -> int:
        with self._lock:
            return self._version

    def a3_config(self, gnb_id: int, cell_id: int) -> A3Config:
        with self._lock:
            leaves = dict(self._resolve(ConfigPath(gnb_id, cell_id, "offset-db")))
        return A3Config(
            offset_db=float(leaves["offset-db"]),
            hysteresis_db=float(leaves["hysteresis-db"]),
            ttt_ms=int(leaves["ttt-ms"]),
        )

    def propose(self, patch: ConfigPatch, rationale: str, cycle_id: str,
                actor: Actor = Actor.AGENT) -> Proposal:
        """Store a PENDING proposal; the tree is untouched.

        Raises:
            InvalidPatch: a path does not resolve or a value breaks the
                leaf's invariant.
        """
        with self._lock:
            for entry in patch.entries:
                try:
                    self._resolve(entry.path)
                except PathNotFound:
                    raise InvalidPatch(str(entry.path), "path does not resolve") from None
            self._proposal_seq += 1
            proposal = Proposal(
                proposal_id=f"prop-{self._proposal_seq}",
                patch=patch,
                rationale=rationale,
                created_by_cycle=cycle_id,
            )
            proposal.transitions["PENDING"] = self.audit.now()
            self._proposals[proposal.proposal_id] = proposal
        self.audit.record(actor, AuditAction.PROPOSE, proposal.proposal_id, proposal.to_dict())
        return proposal

    def get_proposal(self, proposal_id: str) -> Proposal:
        with self._lock:
            try:
                return self._proposals[proposal_id]
            except KeyError:
                raise UnknownProposal(proposal_id) from None

    def proposals(self) -> list[Proposal]:
        with self._lock:
            return list(self._proposals.values())

    def decide(self, proposal_id: str, approve: bool, operator: str) -> Proposal:
        """PENDING -> APPROVED or REJECTED; rejection is terminal."""
        with self._lock:
            proposal = self.get_proposal(proposal_id)
            if proposal.status is not ProposalStatus.PENDING:
                raise NotPending(f"{proposal_id} is {proposal.status.value}")
            proposal.status = ProposalStatus.APPROVED if approve else ProposalStatus.REJECTED
            proposal.decided_by = operator
            proposal.transitions[proposal.status.value] = self.audit.now()
        self.audit.record(
            Actor.OPERATOR, AuditAction.DECIDE, proposal_id,
            {"decision": proposal.status.value, "operator": operator},
        )
        return proposal

    def apply(self, proposal_id: str) -> ApplyReport:
        """Atomically apply an APPROVED proposal; all entries or none.

        Every expected_old must still match; on mismatch the proposal is
        FAILED, nothing changes, and StaleValue is raised.  On success the
        version increments by one and each entry's read-back value is
        included in the report.
        """
        with self._lock:
            proposal = self.get_proposal(proposal_id)
            if proposal.status is not ProposalStatus.APPROVED:
                self.audit.record(
                    Actor.ORCHESTRATOR, AuditAction.APPLY, proposal_id,
                    {"outcome": "NOT_APPROVED", "status": proposal.status.value},
                )
                raise NotApproved(f"{proposal_id} is {proposal.status.value}")
            stale = None
            for entry in proposal.patch.entries:
                current = self._resolve(entry.path)[entry.path.leaf]
                if current != entry.expected_old:
                    stale = (entry, current)
                    break
            if stale is not None:
                entry, current = stale
                proposal.status = ProposalStatus.FAILED
                proposal.transitions["FAILED"] = self.audit.now()
                self.audit.record(
                    Actor.ORCHESTRATOR, AuditAction.APPLY, proposal_id,
                    {"outcome": "STALE", "path": str(entry.path)},
                )
                raise StaleValue(str(entry.path), entry.expected_old, current)
            reports = []
            for entry in proposal.patch.entries:
                leaves = self._resolve(entry.path)
                old = leaves[entry.path.leaf]
                leaves[entry.path.leaf] = entry.new
                reports.append((entry, old))
            self._version += 1
            readbacks = tuple(
                ApplyEntryReport(
                    path=str(entry.path),
                    old=old,
                    new=entry.new,
                    readback=self._resolve(entry.path)[entry.path.leaf],
                )
                for entry, old in reports
            )
            proposal.status = ProposalStatus.APPLIED
            proposal.transitions["APPLIED"] = self.audit.now()
            report = ApplyReport(proposal_id=proposal_id, entries=readbacks, new_version=self._version)
        self.audit.record(
            Actor.ORCHESTRATOR, AuditAction.APPLY, proposal_id,
            {"outcome": "APPLIED", "version": report.new_version,
             "entries": [{"path": e.path, "old": e.old, "new": e.new} for e in report.entries]},
        )
        logger.info("applied %s -> version %d", proposal_id, report.new_version)
        return report

    def history(self) -> list[AuditRecord]:
        return self.audit.records()

    def export_tree(self) -> dict:
        """Flat path -> value map of the whole tree (for /config and reports)."""
        with self._lock:
            return {
                str(ConfigPath(gnb_id, cell_id, leaf)): leaves[leaf]
                for gnb_id in sorted(self._tree)
                for cell_id, leaves in sorted(self._tree[gnb_id].items())
                for leaf in A3_LEAVES
            }

    @classmethod
    def import_tree(cls, doc: dict, audit: AuditLog | None = None) -> "ConfigService":
        """Rebuild a service from an export_tree() document.

        Raises:
            InvalidPatch: a path or value does not validate.
        """
        svc = cls(audit=audit)
        with svc._lock:
            for path_text, value in doc.items():
                try:
                    path = ConfigPath.parse(path_text)
                    checked = _validate_leaf_value(path.leaf, value)
                except ValueError as exc:
                    raise InvalidPatch(path_text, str(exc)) from None
                svc._tree.setdefault(path.gnb_id, {}).setdefault(path.cell_id, {})[path.leaf] = checked
            for gnb_id, cells in svc._tree.items():
                for cell_id, leaves in cells.items():
                    missing = [leaf for leaf in A3_LEAVES if leaf not in leaves]
                    if missing:
                        raise InvalidPatch(f"gnb/{gnb_id}/cell/{cell_id}/a3", f"missing leaves {missing}")
        return svc
