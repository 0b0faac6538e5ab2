"""Event ingestion pipeline: normalization, bounded queue, and batch triggering.

Raw mobility events arrive from the simulator or from external posters,
get normalized into a fixed schema, and sit in a FIFO queue until a
batching condition fires: either no new event arrived for a quiescence
window, or enough events piled up.  Reasoning consumes whole batches,
never the raw stream.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

logger = logging.getLogger(__name__)

RAW_EVENT_SCHEMA_VERSION = 1

DEFAULT_QUIESCENCE_MS = 2000
DEFAULT_MAX_COUNT = 50
DEFAULT_QUEUE_CAP = 10_000


class MalformedEvent(Exception):
    """Raised when a raw payload is missing or corrupting a required field."""

    def __init__(self, field_name: str, reason: str = "missing or invalid"):
        self.field_name = field_name
        super().__init__(f"malformed event field '{field_name}': {reason}")


class QueueFull(Exception):
    """Backpressure signal: the ingest queue hit its hard cap."""


class EventSource(Enum):
    SIM = "SIM"
    EXTERNAL = "EXTERNAL"


class EventKind(Enum):
    A3_TRIGGER = "A3_TRIGGER"
    HO_ATTEMPT = "HO_ATTEMPT"
    HO_SUCCESS = "HO_SUCCESS"
    HO_FAILURE = "HO_FAILURE"


class TriggerReason(Enum):
    QUIESCENCE = "QUIESCENCE"
    COUNT = "COUNT"


@dataclass(frozen=True)
class RawEvent:
    """One wire-format event document, as received."""

    source: EventSource
    payload: dict
    received_at: int  # milliseconds since epoch (or scenario clock)

    def __post_init__(self):
        if not self.payload:
            raise MalformedEvent("payload", "empty payload")


@dataclass(frozen=True)
class NormalizedEvent:
    event_id: str
    time_s: float
    ue_id: int
    kind: EventKind
    source_cell: int
    target_cell: int
    rsrp_serving_dbm: float | None = None
    rsrp_neighbor_dbm: float | None = None
    trigger_margin_db: float | None = None
    aux: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.time_s < 0:
            raise MalformedEvent("time_s", "must be >= 0")

    def to_payload(self) -> dict:
        """Render as a raw-event payload document (the wire schema)."""
        doc = {
            "schema_version": RAW_EVENT_SCHEMA_VERSION,
            "event_id": self.event_id,
            "time_s": self.time_s,
            "ue_id": self.ue_id,
            "kind": self.kind.value,
            "source_cell": self.source_cell,
            "target_cell": self.target_cell,
        }
        if self.rsrp_serving_dbm is not None:
            doc["rsrp_serving_dbm"] = self.rsrp_serving_dbm
        if self.rsrp_neighbor_dbm is not None:
            doc["rsrp_neighbor_dbm"] = self.rsrp_neighbor_dbm
        if self.trigger_margin_db is not None:
            doc["trigger_margin_db"] = self.trigger_margin_db
        doc.update(self.aux)
        return doc


@dataclass(frozen=True)
class BatchPolicy:
    quiescence_ms: int = DEFAULT_QUIESCENCE_MS
    max_count: int = DEFAULT_MAX_COUNT

    def __post_init__(self):
        if self.quiescence_ms <= 0:
            raise ValueError("quiescence_ms must be > 0")
        if self.max_count < 1:
            raise ValueError("max_count must be >= 1")


@dataclass(frozen=True)
class EventBatch:
    batch_id: str
    events: tuple[NormalizedEvent, ...]
    trigger_reason: TriggerReason
    created_at: int  # ms, clock of the poll that emitted it

    def __post_init__(self):
        if not self.events:
            raise ValueError("a batch is never empty")

    @property
    def ue_ids(self) -> frozenset[int]:
        return frozenset(e.ue_id for e in self.events)


# Fields every payload must carry; rsrp values are additionally required
# for A3_TRIGGER so the margin can be recomputed.
_REQUIRED_FIELDS = ("time_s", "ue_id", "kind", "source_cell", "target_cell")
_KNOWN_FIELDS = frozenset(
    _REQUIRED_FIELDS
    + ("schema_version", "event_id", "rsrp_serving_dbm", "rsrp_neighbor_dbm", "trigger_margin_db")
)


def normalize(raw: RawEvent, event_id: str | None = None) -> NormalizedEvent:
    """Map a raw payload onto the normalized schema.

    Unknown extra fields are preserved in ``aux`` for audit.  The trigger
    margin is recomputed from the attached A3 snapshot
    (``a3_offset_db``/``a3_hysteresis_db``) when one is present, so a
    poster cannot smuggle in an inconsistent margin.

    Raises:
        MalformedEvent: a required field is missing or of the wrong type.
    """
    payload = raw.payload
    for name in _REQUIRED_FIELDS:
        if name not in payload or payload[name] is None:
            raise MalformedEvent(name)
    try:
        kind = EventKind(payload["kind"])
    except ValueError:
        raise MalformedEvent("kind", f"unknown kind {payload['kind']!r}") from None

    def _num(name, required):
        value = payload.get(name)
        if value is None:
            if required:
                raise MalformedEvent(name)
            return None
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise MalformedEvent(name, "not a number")
        return float(value)

    rsrp_serving = _num("rsrp_serving_dbm", required=kind is EventKind.A3_TRIGGER)
    rsrp_neighbor = _num("rsrp_neighbor_dbm", required=kind is EventKind.A3_TRIGGER)

    margin = _num("trigger_margin_db", required=False)
    offset = _num("a3_offset_db", required=False)
    hysteresis = _num("a3_hysteresis_db", required=False)
    if offset is not None and hysteresis is not None and rsrp_serving is not None and rsrp_neighbor is not None:
        margin = (rsrp_neighbor - rsrp_serving) - (offset + hysteresis)

    try:
        ue_id = int(payload["ue_id"])
        source_cell = int(payload["source_cell"])
        target_cell = int(payload["target_cell"])
        time_s = float(payload["time_s"])
    except (TypeError, ValueError) as exc:
        raise MalformedEvent(str(exc), "not numeric") from None
    if time_s < 0:
        raise MalformedEvent("time_s", "must be >= 0")

    aux = {k: v for k, v in payload.items() if k not in _KNOWN_FIELDS}
    return NormalizedEvent(
        event_id=str(payload.get("event_id") or event_id or ""),
        time_s=time_s,
        ue_id=ue_id,
        kind=kind,
        source_cell=source_cell,
        target_cell=target_cell,
        rsrp_serving_dbm=rsrp_serving,
        rsrp_neighbor_dbm=rsrp_neighbor,
        trigger_margin_db=margin,
        aux=aux,
    )


@dataclass(frozen=True)
class QuarantinedEvent:
    raw: RawEvent
    reason: str


class EventPipeline:
    """Bounded FIFO queue with quiescence/count batch triggering.

    Ingestion and polling may run on different threads; all queue state
    is guarded by one lock and a poll drains atomically, so no event is
    ever seen by two batches.
    """

    def __init__(self, hard_cap: int = DEFAULT_QUEUE_CAP):
        self._lock = threading.Lock()
        self._queue: deque[NormalizedEvent] = deque()
        self._quarantine: list[QuarantinedEvent] = []
        self._hard_cap = hard_cap
        self._last_ingest_ms: int | None = None
        self._event_seq = 0
        self._batch_seq = 0

    def next_event_id(self) -> str:
        with self._lock:
            self._event_seq += 1
            return f"evt-{self._event_seq}"

    def submit_raw(self, raw: RawEvent) -> NormalizedEvent | None:
        """Normalize and ingest; malformed events land in quarantine.

        Returns the normalized event, or None if it was quarantined.
        """
        try:
            event = normalize(raw, event_id=self.next_event_id())
        except MalformedEvent as exc:
            with self._lock:
                self._quarantine.append(QuarantinedEvent(raw=raw, reason=str(exc)))
            logger.warning("quarantined event: %s", exc)
            return None
        self.ingest(event, now_ms=raw.received_at)
        return event

    def ingest(self, event: NormalizedEvent, now_ms: int) -> None:
        """Append FIFO; never blocks on reasoning.

        Raises:
            QueueFull: queue is at the hard cap (backpressure).
        """
        with self._lock:
            if len(self._queue) >= self._hard_cap:
                raise QueueFull(f"queue at hard cap {self._hard_cap}")
            self._queue.append(event)
            self._last_ingest_ms = now_ms

    def depth(self) -> int:
        with self._lock:
            return len(self._queue)

    def quarantined(self) -> list[QuarantinedEvent]:
        with self._lock:
            return list(self._quarantine)

    def poll_batch(self, policy: BatchPolicy, now_ms: int) -> EventBatch | None:
        """Emit a batch if a trigger condition holds, else None.

        COUNT is checked first and takes exactly ``max_count`` oldest
        events, keeping every batch bounded even when the poller lags.
        QUIESCENCE drains the whole (smaller) queue.
        """
        with self._lock:
            if not self._queue:
                return None
            if len(self._queue) >= policy.max_count:
                events = tuple(self._queue.popleft() for _ in range(policy.max_count))
                reason = TriggerReason.COUNT
            elif self._last_ingest_ms is not None and now_ms - self._last_ingest_ms >= policy.quiescence_ms:
                events = tuple(self._queue)
                self._queue.clear()
                reason = TriggerReason.QUIESCENCE
            else:
                return None
            self._batch_seq += 1
            batch = EventBatch(
                batch_id=f"batch-{self._batch_seq}",
                events=events,
                trigger_reason=reason,
                created_at=now_ms,
            )
        logger.debug("emitted %s (%d events, %s)", batch.batch_id, len(events), reason.value)
        return batch
