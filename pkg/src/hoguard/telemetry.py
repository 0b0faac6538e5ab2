"""In-process log and metric stores with scoped, bounded query interfaces.

These stand in for the indexed log store and the time-series database of
a full deployment.  The reasoning agent can only reach them through the
tool gateway, and every response is hard-bounded (500 log records, 5000
metric points) so no query can flood the agent's context.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .pipeline import EventKind

logger = logging.getLogger(__name__)

LOG_LIMIT_MAX = 500
METRIC_POINTS_MAX = 5000
DETAIL_MAX_BYTES = 1024
SNAPSHOT_SCHEMA_VERSION = 1


class InvalidQuery(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"invalid query: {reason}")


class UnknownSeries(Exception):
    pass


class MetricSeries(Enum):
    RSRP = "RSRP"
    FPS = "FPS"


@dataclass(frozen=True)
class LogRecord:
    time_s: float
    ue_id: int
    kind: EventKind
    source_cell: int
    target_cell: int
    detail: str = ""
    trigger_margin_db: float | None = None

    def __post_init__(self):
        if len(self.detail.encode("utf-8")) > DETAIL_MAX_BYTES:
            raise ValueError(f"detail exceeds {DETAIL_MAX_BYTES} bytes")

    def to_dict(self) -> dict:
        doc = {
            "time_s": self.time_s,
            "ue_id": self.ue_id,
            "kind": self.kind.value,
            "source_cell": self.source_cell,
            "target_cell": self.target_cell,
            "detail": self.detail,
        }
        if self.trigger_margin_db is not None:
            doc["trigger_margin_db"] = self.trigger_margin_db
        return doc


@dataclass(frozen=True)
class LogQuery:
    time_range: tuple[float, float]
    ue_id: int | None = None
    kinds: frozenset[EventKind] | None = None
    limit: int = LOG_LIMIT_MAX

    def validate(self) -> None:
        if self.time_range[0] > self.time_range[1]:
            raise InvalidQuery(f"time_range reversed: {self.time_range}")
        if not 1 <= self.limit <= LOG_LIMIT_MAX:
            raise InvalidQuery(f"limit must be in [1, {LOG_LIMIT_MAX}], got {self.limit}")

    def matches(self, record: LogRecord) -> bool:
        if not self.time_range[0] <= record.time_s <= self.time_range[1]:
            return False
        if self.ue_id is not None and record.ue_id != self.ue_id:
            return False
        if self.kinds is not None and record.kind not in self.kinds:
            return False
        return True


@dataclass(frozen=True)
class MetricQuery:
    series: MetricSeries
    time_range: tuple[float, float]
    downsample_s: float = 1.0
    cell_id: int | None = None  # required for RSRP

    def validate(self) -> None:
        if self.time_range[0] > self.time_range[1]:
            raise InvalidQuery(f"time_range reversed: {self.time_range}")
        if self.downsample_s < 0.1:
            raise InvalidQuery(f"downsample_s must be >= 0.1, got {self.downsample_s}")
        span = self.time_range[1] - self.time_range[0]
        if math.ceil(span / self.downsample_s) > METRIC_POINTS_MAX:
            raise InvalidQuery(
                f"range/downsample would yield > {METRIC_POINTS_MAX} points"
            )
        if self.series is MetricSeries.RSRP and self.cell_id is None:
            raise InvalidQuery("RSRP queries need a cell_id")


@dataclass(frozen=True)
class LogQueryResult:
    records: tuple[LogRecord, ...]
    truncated: bool


@dataclass(frozen=True)
class MetricPoint:
    time_s: float
    value: float


class LogStore:
    """Append-only, time-indexed log records; multiple readers, one writer."""

    def __init__(self):
        self._lock = threading.Lock()
        self._records: list[LogRecord] = []

    def append(self, record: LogRecord) -> None:
        with self._lock:
            self._records.append(record)

    def extend(self, records) -> None:
        with self._lock:
            self._records.extend(records)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def query(self, q: LogQuery) -> LogQueryResult:
        """Time-ordered records matching every present filter, capped at q.limit."""
        q.validate()
        with self._lock:
            snapshot = list(self._records)
        matched = sorted((r for r in snapshot if q.matches(r)), key=lambda r: r.time_s)
        truncated = len(matched) > q.limit
        return LogQueryResult(records=tuple(matched[: q.limit]), truncated=truncated)

    def snapshot_to(self, path: str | Path) -> None:
        """Dump all records as newline-delimited JSON with a metadata header."""
        with self._lock:
            snapshot = list(self._records)
        lines = [json.dumps({"store": "logs", "schema_version": SNAPSHOT_SCHEMA_VERSION, "count": len(snapshot)})]
        lines += [json.dumps(r.to_dict()) for r in snapshot]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class _SeriesKey:
    series: MetricSeries
    cell_id: int | None


class MetricStore:
    """Time-series points, queried as bucket means at a chosen resolution."""

    def __init__(self):
        self._lock = threading.Lock()
        self._series: dict[_SeriesKey, list[tuple[float, float]]] = {}

    def add_point(self, series: MetricSeries, time_s: float, value: float, cell_id: int | None = None) -> None:
        key = _SeriesKey(series, cell_id)
        with self._lock:
            self._series.setdefault(key, []).append((time_s, value))

    def add_points(self, series: MetricSeries, points, cell_id: int | None = None) -> None:
        key = _SeriesKey(series, cell_id)
        with self._lock:
            self._series.setdefault(key, []).extend(points)

    def known_series(self) -> list[str]:
        with self._lock:
            return sorted({k.series.value for k in self._series})

    def snapshot_to(self, path: str | Path) -> None:
        """Dump all series as newline-delimited JSON with a metadata header."""
        with self._lock:
            items = [(key, list(points)) for key, points in self._series.items()]
        total = sum(len(points) for _, points in items)
        lines = [json.dumps({"store": "metrics", "schema_version": SNAPSHOT_SCHEMA_VERSION, "count": total})]
        for key, points in items:
            lines += [
                json.dumps({"series": key.series.value, "cell_id": key.cell_id,
                            "time_s": t, "value": v})
                for t, v in points
            ]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def query(self, q: MetricQuery) -> list[MetricPoint]:
        """Bucket-averaged points; empty buckets are skipped.

        Raises:
            InvalidQuery: malformed range/downsample or missing cell_id.
            UnknownSeries: no data was ever written for that series key.
        """
        q.validate()
        key = _SeriesKey(q.series, q.cell_id if q.series is MetricSeries.RSRP else None)
        with self._lock:
            if key not in self._series:
                raise UnknownSeries(f"{q.series.value} (cell_id={q.cell_id})")
            points = list(self._series[key])
        lo, hi = q.time_range
        buckets: dict[int, list[float]] = {}
        for t, v in points:
            if lo <= t <= hi:
                idx = int((t - lo) / q.downsample_s)
                buckets.setdefault(idx, []).append(v)
        out = [
            MetricPoint(time_s=lo + idx * q.downsample_s, value=sum(vals) / len(vals))
            for idx, vals in sorted(buckets.items())
        ]
        if len(out) > METRIC_POINTS_MAX:  # guarded by validate(), belt and braces
            out = out[:METRIC_POINTS_MAX]
        return out
