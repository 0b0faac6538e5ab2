"""Two-cell RAN simulator: RSRP traces, A3 evaluation, handovers, FPS proxy.

Everything here is deterministic given the scenario and seed.  The radio
model is log-distance path loss plus first-order autoregressive shadowing
advanced by distance moved, which is enough to make the neighbor-vs-serving
RSRP delta flap around the cell boundary and provoke repeated A3 triggers
when the mobility parameters are too tight.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .pipeline import EventKind, NormalizedEvent

if TYPE_CHECKING:
    from .scenario import ScenarioSpec

logger = logging.getLogger(__name__)

# 3GPP-style enumerated time-to-trigger values (ms).
TTT_ALLOWED_MS = (0, 40, 64, 80, 100, 128, 160, 256, 320, 480, 512, 640, 1024)

OFFSET_RANGE_DB = (-15.0, 15.0)

DEFAULT_TICK_S = 0.01
DEFAULT_HO_EXECUTION_DELAY_S = 0.05
DEFAULT_INTERRUPTION_MS_PER_HO = 500.0
DEFAULT_PING_PONG_WINDOW_S = 5.0
MIN_DISTANCE_M = 0.1

# Slack for sample-time comparisons so 10 ms grids behave exactly.
_TIME_EPS = 1e-9


class EmptyTrace(Exception):
    """evaluate_a3 was handed a trace with no samples."""


class InvalidScenario(Exception):
    def __init__(self, field_name: str, reason: str):
        self.field_name = field_name
        self.reason = reason
        super().__init__(f"invalid scenario field '{field_name}': {reason}")


def _is_half_db(value: float) -> bool:
    return abs(value * 2 - round(value * 2)) < 1e-9


@dataclass(frozen=True)
class A3Config:
    """Mobility trigger parameters: neighbor must beat serving by
    offset+hysteresis for ttt_ms before a handover is triggered."""

    offset_db: float
    hysteresis_db: float
    ttt_ms: int

    def __post_init__(self):
        if not _is_half_db(self.offset_db):
            raise ValueError(f"offset_db must be a multiple of 0.5, got {self.offset_db}")
        if not OFFSET_RANGE_DB[0] <= self.offset_db <= OFFSET_RANGE_DB[1]:
            raise ValueError(f"offset_db out of range {OFFSET_RANGE_DB}: {self.offset_db}")
        if not _is_half_db(self.hysteresis_db):
            raise ValueError(f"hysteresis_db must be a multiple of 0.5, got {self.hysteresis_db}")
        if self.hysteresis_db < 0:
            raise ValueError(f"hysteresis_db must be >= 0, got {self.hysteresis_db}")
        if self.ttt_ms not in TTT_ALLOWED_MS:
            raise ValueError(f"ttt_ms {self.ttt_ms} not in allowed set {TTT_ALLOWED_MS}")

    @property
    def entering_threshold_db(self) -> float:
        return self.offset_db + self.hysteresis_db

    @property
    def leaving_threshold_db(self) -> float:
        return self.offset_db - self.hysteresis_db


@dataclass(frozen=True)
class CellConfig:
    cell_id: int
    gnb_id: int
    position: tuple[float, float]
    tx_power_ref_dbm: float
    a3: A3Config

    def __post_init__(self):
        if not math.isfinite(self.tx_power_ref_dbm):
            raise ValueError("tx_power_ref_dbm must be finite")


@dataclass(frozen=True)
class UETrajectory:
    """Piecewise-linear path; position is interpolated between waypoints."""

    ue_id: int
    waypoints: tuple[tuple[float, float, float], ...]  # (time_s, x_m, y_m)

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("trajectory needs at least 2 waypoints")
        times = [w[0] for w in self.waypoints]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")

    @property
    def start_s(self) -> float:
        return self.waypoints[0][0]

    @property
    def end_s(self) -> float:
        return self.waypoints[-1][0]

    def position_at(self, t: float) -> tuple[float, float]:
        wps = self.waypoints
        if t <= wps[0][0]:
            return wps[0][1], wps[0][2]
        if t >= wps[-1][0]:
            return wps[-1][1], wps[-1][2]
        for (t1, x1, y1), (t2, x2, y2) in zip(wps, wps[1:]):
            if t1 <= t <= t2:
                frac = (t - t1) / (t2 - t1)
                return x1 + frac * (x2 - x1), y1 + frac * (y2 - y1)
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class RadioSample:
    time_s: float
    rsrp_dbm: dict[int, float]  # cell_id -> dBm


class HandoverOutcome(Enum):
    SUCCESS = "SUCCESS"
    FAILURE = "FAILURE"


@dataclass(frozen=True)
class HandoverRecord:
    time_s: float
    ue_id: int
    source_cell: int
    target_cell: int
    outcome: HandoverOutcome
    trigger_margin_db: float

    def __post_init__(self):
        if self.source_cell == self.target_cell:
            raise ValueError("source_cell must differ from target_cell")


@dataclass(frozen=True)
class FpsTrace:
    samples: tuple[tuple[int, float], ...]  # (second_index, fps)
    nominal_fps: float


@dataclass(frozen=True)
class A3Trigger:
    time_s: float
    trigger_margin_db: float


class ShadowingState:
    """Gudmundson-style AR(1) shadowing for one cell, advanced by distance.

    Correlation between two points d meters apart is exp(-d / decorr_m);
    the marginal distribution stays N(0, sigma^2) at every step.
    """

    def __init__(self, sigma_db: float, decorrelation_m: float, rng: np.random.Generator):
        self._sigma = sigma_db
        self._decorr = decorrelation_m
        self._rng = rng
        self.value = float(rng.normal(0.0, sigma_db)) if sigma_db > 0 else 0.0

    def advance(self, distance_m: float) -> float:
        if self._sigma <= 0:
            return self.value
        rho = math.exp(-distance_m / self._decorr)
        innovation = self._sigma * math.sqrt(max(0.0, 1.0 - rho * rho))
        self.value = rho * self.value + float(self._rng.normal(0.0, innovation))
        return self.value


def compute_rsrp(
    cell: CellConfig,
    position: tuple[float, float],
    shadow_state: ShadowingState | None,
    path_loss_exponent: float = 3.0,
) -> float:
    """Log-distance RSRP in dBm at a UE position.

    Distance is clamped to 0.1 m so the near-field never blows up.
    """
    dx = position[0] - cell.position[0]
    dy = position[1] - cell.position[1]
    d = max(MIN_DISTANCE_M, math.hypot(dx, dy))
    shadow = shadow_state.value if shadow_state is not None else 0.0
    return cell.tx_power_ref_dbm - 10.0 * path_loss_exponent * math.log10(d) + shadow


class A3Tracker:
    """Incremental A3 entering-condition tracker for one (serving, neighbor) pair.

    Feed samples in time order; a trigger fires at the first sample t where
    Mn - Mp > offset + hysteresis held at every sample in [t - ttt, t] and
    that window lies fully inside the trace.  After a trigger the tracker
    disarms until the leaving condition Mn - Mp < offset - hysteresis is
    observed (a handover role swap resets it entirely).
    """

    def __init__(self, cfg: A3Config):
        self._cfg = cfg
        self._ttt_s = cfg.ttt_ms / 1000.0
        self._armed = True
        self._first_time: float | None = None
        self._last_bad_time: float | None = None

    def reset(self) -> None:
        self._armed = True
        self._first_time = None
        self._last_bad_time = None

    def feed(self, time_s: float, delta_db: float) -> A3Trigger | None:
        cfg = self._cfg
        if self._first_time is None:
            self._first_time = time_s
        entering = delta_db > cfg.entering_threshold_db
        if not entering:
            self._last_bad_time = time_s
        if not self._armed:
            if delta_db < cfg.leaving_threshold_db:
                self._armed = True
            return None
        if not entering:
            return None
        window_start = time_s - self._ttt_s
        if window_start < self._first_time - _TIME_EPS:
            return None  # window extends before the trace
        if self._last_bad_time is not None and self._last_bad_time > window_start - _TIME_EPS:
            return None  # a non-entering sample sits inside the window
        self._armed = False
        return A3Trigger(time_s=time_s, trigger_margin_db=delta_db - cfg.entering_threshold_db)


def evaluate_a3(
    trace: Iterable[RadioSample],
    serving: int,
    neighbor: int,
    cfg: A3Config,
) -> list[A3Trigger]:
    """Run the A3 engine over a recorded trace and return all triggers.

    Raises:
        EmptyTrace: the trace has no samples.
        ValueError: serving == neighbor.
    """
    if serving == neighbor:
        raise ValueError("serving and neighbor must differ")
    tracker = A3Tracker(cfg)
    triggers: list[A3Trigger] = []
    count = 0
    for sample in trace:
        count += 1
        delta = sample.rsrp_dbm[neighbor] - sample.rsrp_dbm[serving]
        trigger = tracker.feed(sample.time_s, delta)
        if trigger is not None:
            triggers.append(trigger)
    if count == 0:
        raise EmptyTrace("no samples in trace")
    return triggers


def count_ping_pongs(handovers: list[HandoverRecord], window_s: float = DEFAULT_PING_PONG_WINDOW_S) -> int:
    """Count A->B / B->A reversal pairs with 0 < gap <= window_s.

    Greedy earliest matching: records are scanned in time order and each
    one pairs with the earliest compatible later record; every record
    participates in at most one pair.
    """
    records = sorted(handovers, key=lambda h: h.time_s)
    used = [False] * len(records)
    count = 0
    for i, first in enumerate(records):
        if used[i]:
            continue
        for j in range(i + 1, len(records)):
            if used[j]:
                continue
            second = records[j]
            gap = second.time_s - first.time_s
            if gap > window_s:
                break
            if gap > 0 and second.source_cell == first.target_cell and second.target_cell == first.source_cell:
                used[i] = used[j] = True
                count += 1
                break
    return count


def compute_fps(
    handovers: list[HandoverRecord],
    duration_s: float,
    nominal_fps: float,
    interruption_ms_per_ho: float = DEFAULT_INTERRUPTION_MS_PER_HO,
) -> FpsTrace:
    """Map handovers to an application-layer FPS trace.

    Each handover blanks the stream for ``interruption_ms_per_ho`` starting
    at its timestamp; the per-second fps is nominal scaled by the
    unblanked fraction of that second (blanked intervals are unioned, so
    overlapping interruptions don't double-count).
    """
    if duration_s < 1:
        raise ValueError("duration_s must be >= 1")
    n_seconds = math.ceil(duration_s)
    intervals = sorted(
        (h.time_s, h.time_s + interruption_ms_per_ho / 1000.0) for h in handovers
    )
    merged: list[tuple[float, float]] = []
    for start, end in intervals:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    samples = []
    for k in range(n_seconds):
        blanked = 0.0
        for start, end in merged:
            lo = max(start, float(k))
            hi = min(end, float(k + 1))
            if hi > lo:
                blanked += hi - lo
        fps = max(0.0, nominal_fps * (1.0 - blanked))
        samples.append((k, fps))
    return FpsTrace(samples=tuple(samples), nominal_fps=nominal_fps)


@dataclass
class ScenarioOutput:
    """Everything one simulated pass produces."""

    events: list[NormalizedEvent]
    handovers: list[HandoverRecord]
    radio: list[RadioSample]
    fps: FpsTrace
    initial_serving_cell: int = 0
    a3_by_cell: dict[int, A3Config] = field(default_factory=dict)


def run_scenario(
    spec: "ScenarioSpec",
    a3_overrides: dict[int, A3Config] | None = None,
    event_id_prefix: str = "evt",
) -> ScenarioOutput:
    """Simulate the scenario at a fixed tick and emit events, handovers, FPS.

    ``a3_overrides`` substitutes the A3 config per cell_id (how the
    experiment runner applies the misconfigured or corrected presets)
    without touching the spec.  Identical spec + seed gives bit-identical
    output.

    Raises:
        InvalidScenario: a structural precondition fails.
    """
    spec.validate()
    cells = sorted(spec.cells, key=lambda c: c.cell_id)
    a3_by_cell = {c.cell_id: c.a3 for c in cells}
    if a3_overrides:
        for cell_id, cfg in a3_overrides.items():
            if cell_id not in a3_by_cell:
                raise InvalidScenario("a3_overrides", f"unknown cell_id {cell_id}")
            a3_by_cell[cell_id] = cfg

    traj = spec.trajectory
    tick = spec.tick_s
    delay = spec.ho_execution_delay_s
    shadows = {
        c.cell_id: ShadowingState(
            spec.radio.shadowing_sigma_db,
            spec.radio.shadowing_decorrelation_m,
            np.random.default_rng([spec.seed, c.cell_id]),
        )
        for c in cells
    }

    n_ticks = int(round((traj.end_s - traj.start_s) / tick)) + 1
    events: list[NormalizedEvent] = []
    handovers: list[HandoverRecord] = []
    radio: list[RadioSample] = []
    event_seq = 0
    gnb_of = {c.cell_id: c.gnb_id for c in cells}

    def emit(kind: EventKind, t: float, source: int, target: int,
             rsrp: dict[int, float], margin: float | None) -> None:
        nonlocal event_seq
        event_seq += 1
        events.append(NormalizedEvent(
            event_id=f"{event_id_prefix}-{event_seq}",
            time_s=round(t, 6),
            ue_id=traj.ue_id,
            kind=kind,
            source_cell=source,
            target_cell=target,
            rsrp_serving_dbm=round(rsrp[source], 3),
            rsrp_neighbor_dbm=round(rsrp[target], 3),
            trigger_margin_db=None if margin is None else round(margin, 3),
            aux={"source_gnb": gnb_of[source], "target_gnb": gnb_of[target]},
        ))

    prev_pos = traj.position_at(traj.start_s)
    serving: int | None = None
    tracker: A3Tracker | None = None
    neighbor: int | None = None
    pending: tuple[float, int, int, float] | None = None  # (execute_at, source, target, margin)

    for k in range(n_ticks):
        t = traj.start_s + k * tick
        pos = traj.position_at(t)
        moved = math.hypot(pos[0] - prev_pos[0], pos[1] - prev_pos[1])
        prev_pos = pos
        rsrp: dict[int, float] = {}
        for cell in cells:
            state = shadows[cell.cell_id]
            if k > 0:
                state.advance(moved)
            rsrp[cell.cell_id] = compute_rsrp(cell, pos, state, spec.radio.path_loss_exponent)
        radio.append(RadioSample(time_s=round(t, 6), rsrp_dbm=rsrp))

        if serving is None:
            # attach to the strongest cell at the first tick (ties: lowest id)
            serving = max(cells, key=lambda c: (rsrp[c.cell_id], -c.cell_id)).cell_id
            neighbor = next(c.cell_id for c in cells if c.cell_id != serving)
            tracker = A3Tracker(a3_by_cell[serving])

        if pending is not None:
            execute_at, source, target, margin = pending
            if t >= execute_at - _TIME_EPS:
                emit(EventKind.HO_SUCCESS, t, source, target, rsrp, margin)
                handovers.append(HandoverRecord(
                    time_s=round(t, 6),
                    ue_id=traj.ue_id,
                    source_cell=source,
                    target_cell=target,
                    outcome=HandoverOutcome.SUCCESS,
                    trigger_margin_db=round(margin, 6),
                ))
                serving, neighbor = target, source
                tracker = A3Tracker(a3_by_cell[serving])
                pending = None
            continue  # A3 evaluation is suspended while a handover executes

        delta = rsrp[neighbor] - rsrp[serving]
        trigger = tracker.feed(t, delta)
        if trigger is not None:
            emit(EventKind.A3_TRIGGER, t, serving, neighbor, rsrp, trigger.trigger_margin_db)
            emit(EventKind.HO_ATTEMPT, t, serving, neighbor, rsrp, None)
            pending = (t + delay, serving, neighbor, trigger.trigger_margin_db)

    duration = max(1.0, traj.end_s - traj.start_s)
    fps = compute_fps(handovers, duration, spec.nominal_fps, spec.interruption_ms_per_ho)
    initial = max(cells, key=lambda c: (radio[0].rsrp_dbm[c.cell_id], -c.cell_id)).cell_id
    logger.info(
        "scenario %s: %d ticks, %d handovers, %d events",
        getattr(spec, "scenario_id", "?"), n_ticks, len(handovers), len(events),
    )
    return ScenarioOutput(
        events=events,
        handovers=handovers,
        radio=radio,
        fps=fps,
        initial_serving_cell=initial,
        a3_by_cell=a3_by_cell,
    )
