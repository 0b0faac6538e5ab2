"""Log/metric store tests against linear-scan and recompute oracles."""

import pytest
import numpy as np

from oracles import linear_scan_logs, mean_downsample
from hoguard.pipeline import EventKind
from hoguard.telemetry import (
    InvalidQuery,
    LogQuery,
    LogRecord,
    LogStore,
    MetricQuery,
    MetricSeries,
    MetricStore,
    UnknownSeries,
)


def _record(t, ue=17, kind=EventKind.HO_SUCCESS, margin=None):
    return LogRecord(time_s=t, ue_id=ue, kind=kind, source_cell=1, target_cell=2,
                     detail=f"{kind.value}@{t}", trigger_margin_db=margin)


class TestLogStore:
    def test_read_your_writes(self):
        store = LogStore()
        store.append(_record(5.0))
        res = store.query(LogQuery(time_range=(0.0, 10.0)))
        assert len(res.records) == 1 and not res.truncated

    def test_limit_truncates_and_flags(self):
        store = LogStore()
        store.append(_record(1.0))
        store.append(_record(2.0))
        res = store.query(LogQuery(time_range=(0.0, 10.0), limit=1))
        assert len(res.records) == 1
        assert res.truncated

    def test_empty_range(self):
        store = LogStore()
        store.append(_record(1.0))
        assert store.query(LogQuery(time_range=(0.0, 0.0))).records == ()

    def test_limit_bounds(self):
        store = LogStore()
        with pytest.raises(InvalidQuery):
            store.query(LogQuery(time_range=(0.0, 1.0), limit=501))
        with pytest.raises(InvalidQuery):
            store.query(LogQuery(time_range=(0.0, 1.0), limit=0))

    def test_reversed_range_rejected(self):
        with pytest.raises(InvalidQuery):
            LogStore().query(LogQuery(time_range=(5.0, 1.0)))

    def test_ue_filter_matches_linear_scan(self, misconfigured_output):
        store = LogStore()
        for e in misconfigured_output.events:
            store.append(_record(e.time_s, ue=e.ue_id, kind=e.kind, margin=e.trigger_margin_db))
        store.append(_record(30.0, ue=99))
        q = LogQuery(ue_id=17, time_range=(25.0, 60.0),
                     kinds=frozenset({EventKind.HO_SUCCESS}), limit=500)
        got = store.query(q)
        plain = [
            {"time_s": r.time_s, "ue_id": r.ue_id, "kind": r.kind.value}
            for r in [_record(e.time_s, ue=e.ue_id, kind=e.kind) for e in misconfigured_output.events]
            + [_record(30.0, ue=99)]
        ]
        want, truncated = linear_scan_logs(plain, 17, 25.0, 60.0, {"HO_SUCCESS"}, 500)
        assert [r.time_s for r in got.records] == [r["time_s"] for r in want]
        assert got.truncated == truncated

    def test_detail_size_bound(self):
        with pytest.raises(ValueError):
            LogRecord(time_s=0.0, ue_id=1, kind=EventKind.HO_SUCCESS,
                      source_cell=1, target_cell=2, detail="x" * 2000)

    def test_snapshot_roundtrip(self, tmp_path):
        store = LogStore()
        store.append(_record(1.0, margin=0.4))
        path = tmp_path / "logs.ndjson"
        store.snapshot_to(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2
        assert '"store": "logs"' in lines[0]


class TestMetricStore:
    def test_fps_identity_at_native_resolution(self, misconfigured_output):
        store = MetricStore()
        store.add_points(MetricSeries.FPS,
                         [(float(k), fps) for k, fps in misconfigured_output.fps.samples])
        n = len(misconfigured_output.fps.samples)
        points = store.query(MetricQuery(series=MetricSeries.FPS,
                                         time_range=(0.0, float(n)), downsample_s=1.0))
        assert [(p.time_s, p.value) for p in points] == [
            (float(k), fps) for k, fps in misconfigured_output.fps.samples
        ]

    def test_rsrp_downsample_matches_mean_oracle(self, misconfigured_output):
        store = MetricStore()
        raw = [(s.time_s, s.rsrp_dbm[1]) for s in misconfigured_output.radio]
        store.add_points(MetricSeries.RSRP, raw, cell_id=1)
        q = MetricQuery(series=MetricSeries.RSRP, time_range=(10.0, 20.0),
                        downsample_s=1.0, cell_id=1)
        got = store.query(q)
        want = mean_downsample(raw, 10.0, 20.0, 1.0)
        assert [(p.time_s, p.value) for p in got] == pytest.approx(want)
        # 1 s buckets over 100 Hz samples: each point averages ~100 ticks
        assert len(got) == len(want)

    def test_unknown_series(self):
        store = MetricStore()
        with pytest.raises(UnknownSeries):
            store.query(MetricQuery(series=MetricSeries.FPS, time_range=(0.0, 1.0)))

    def test_rsrp_needs_cell(self):
        store = MetricStore()
        store.add_point(MetricSeries.RSRP, 0.0, -80.0, cell_id=1)
        with pytest.raises(InvalidQuery):
            store.query(MetricQuery(series=MetricSeries.RSRP, time_range=(0.0, 1.0)))

    def test_point_budget_enforced(self):
        store = MetricStore()
        store.add_point(MetricSeries.FPS, 0.0, 30.0)
        with pytest.raises(InvalidQuery):
            store.query(MetricQuery(series=MetricSeries.FPS, time_range=(0.0, 10_000.0),
                                    downsample_s=0.1))

    def test_downsample_floor(self):
        with pytest.raises(InvalidQuery):
            MetricQuery(series=MetricSeries.FPS, time_range=(0.0, 1.0),
                        downsample_s=0.01).validate()

    def test_append_only_stability(self):
        store = MetricStore()
        store.add_point(MetricSeries.FPS, 0.0, 30.0)
        first = store.query(MetricQuery(series=MetricSeries.FPS, time_range=(0.0, 1.0)))
        store.add_point(MetricSeries.FPS, 10.0, 20.0)
        second = store.query(MetricQuery(series=MetricSeries.FPS, time_range=(0.0, 1.0)))
        assert first == second


def test_metric_snapshot_roundtrip(tmp_path):
    store = MetricStore()
    store.add_point(MetricSeries.FPS, 0.0, 30.0)
    store.add_point(MetricSeries.RSRP, 0.0, -80.0, cell_id=1)
    path = tmp_path / "metrics.ndjson"
    store.snapshot_to(path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 3
    assert '"store": "metrics"' in lines[0]
