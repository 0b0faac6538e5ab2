"""Pipeline tests: normalization, quarantine, queue bounds, batch triggers."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoguard.pipeline import (
    BatchPolicy,
    EventKind,
    EventPipeline,
    EventSource,
    MalformedEvent,
    NormalizedEvent,
    QueueFull,
    RawEvent,
    TriggerReason,
    normalize,
)


def _payload(**overrides):
    doc = {
        "time_s": 10.0,
        "ue_id": 17,
        "kind": "HO_SUCCESS",
        "source_cell": 1,
        "target_cell": 2,
        "rsrp_serving_dbm": -80.0,
        "rsrp_neighbor_dbm": -76.0,
    }
    doc.update(overrides)
    return {k: v for k, v in doc.items() if v is not None}


def _raw(received_at=0, **overrides):
    return RawEvent(source=EventSource.SIM, payload=_payload(**overrides), received_at=received_at)


def _event(i, time_s=0.0, ue_id=17):
    return NormalizedEvent(
        event_id=f"e{i}", time_s=time_s, ue_id=ue_id, kind=EventKind.HO_SUCCESS,
        source_cell=1, target_cell=2,
    )


class TestNormalize:
    def test_identity_mapping(self):
        event = normalize(_raw(event_id="x-1"), event_id="fallback")
        assert event.kind is EventKind.HO_SUCCESS
        assert event.source_cell == 1 and event.target_cell == 2
        assert event.ue_id == 17

    def test_missing_ue_id(self):
        with pytest.raises(MalformedEvent) as err:
            normalize(_raw(ue_id=None))
        assert err.value.field_name == "ue_id"

    def test_margin_recomputed_from_config_snapshot(self):
        # margin must come out as (Mn - Mp) - (offset + hysteresis)
        event = normalize(_raw(
            kind="A3_TRIGGER",
            rsrp_serving_dbm=-80.0,
            rsrp_neighbor_dbm=-75.5,
            a3_offset_db=2.0,
            a3_hysteresis_db=2.0,
            trigger_margin_db=99.0,  # attached snapshot wins over this
        ))
        expected = (-75.5 - -80.0) - (2.0 + 2.0)
        assert event.trigger_margin_db == pytest.approx(expected)

    def test_a3_trigger_requires_rsrp(self):
        with pytest.raises(MalformedEvent) as err:
            normalize(_raw(kind="A3_TRIGGER", rsrp_neighbor_dbm=None))
        assert err.value.field_name == "rsrp_neighbor_dbm"

    def test_unknown_kind(self):
        with pytest.raises(MalformedEvent):
            normalize(_raw(kind="REBOOT"))

    def test_extra_fields_preserved_in_aux(self):
        event = normalize(_raw(vendor_tag="abc", source_gnb=30))
        assert event.aux["vendor_tag"] == "abc"
        assert event.aux["source_gnb"] == 30

    def test_negative_time_rejected(self):
        with pytest.raises(MalformedEvent):
            normalize(_raw(time_s=-1.0))


class TestIngest:
    def test_depth_counts(self):
        pipe = EventPipeline()
        for i in range(3):
            pipe.ingest(_event(i), now_ms=i)
        assert pipe.depth() == 3

    def test_hard_cap_backpressure(self):
        pipe = EventPipeline(hard_cap=2)
        pipe.ingest(_event(0), now_ms=0)
        pipe.ingest(_event(1), now_ms=1)
        with pytest.raises(QueueFull):
            pipe.ingest(_event(2), now_ms=2)
        assert pipe.depth() == 2

    def test_malformed_goes_to_quarantine_not_queue(self):
        pipe = EventPipeline()
        assert pipe.submit_raw(_raw(ue_id=None)) is None
        assert pipe.depth() == 0
        assert len(pipe.quarantined()) == 1
        assert "ue_id" in pipe.quarantined()[0].reason


class TestPollBatch:
    def test_quiescence_fires_after_gap(self):
        pipe = EventPipeline()
        policy = BatchPolicy(quiescence_ms=2000, max_count=50)
        for i, t in enumerate((0, 500, 1000)):
            pipe.ingest(_event(i, time_s=t / 1000), now_ms=t)
        assert pipe.poll_batch(policy, now_ms=2999) is None
        batch = pipe.poll_batch(policy, now_ms=3001)
        assert batch is not None
        assert batch.trigger_reason is TriggerReason.QUIESCENCE
        assert len(batch.events) == 3
        assert pipe.depth() == 0

    def test_count_fires_before_quiescence(self):
        pipe = EventPipeline()
        policy = BatchPolicy(quiescence_ms=2000, max_count=50)
        for i in range(50):
            pipe.ingest(_event(i), now_ms=i * 20)
        batch = pipe.poll_batch(policy, now_ms=1000)
        assert batch.trigger_reason is TriggerReason.COUNT
        assert len(batch.events) == 50

    def test_count_takes_exactly_max_count_oldest(self):
        pipe = EventPipeline()
        policy = BatchPolicy(quiescence_ms=2000, max_count=10)
        for i in range(25):
            pipe.ingest(_event(i), now_ms=i)
        batch = pipe.poll_batch(policy, now_ms=30)
        assert [e.event_id for e in batch.events] == [f"e{i}" for i in range(10)]
        assert pipe.depth() == 15

    def test_empty_queue_returns_none(self):
        pipe = EventPipeline()
        assert pipe.poll_batch(BatchPolicy(), now_ms=10_000) is None

    def test_order_preserved(self):
        pipe = EventPipeline()
        for i in range(5):
            pipe.ingest(_event(i), now_ms=i)
        batch = pipe.poll_batch(BatchPolicy(quiescence_ms=1, max_count=50), now_ms=10_000)
        assert [e.event_id for e in batch.events] == [f"e{i}" for i in range(5)]


@settings(max_examples=50, deadline=None)
@given(
    arrivals=st.lists(st.integers(0, 50), min_size=0, max_size=300),
    quiescence_ms=st.integers(1, 200),
    max_count=st.integers(1, 40),
    poll_divisor=st.integers(4, 8),
)
def test_conservation_bound_and_honesty(arrivals, quiescence_ms, max_count, poll_divisor):
    """Every event lands in exactly one batch; batches stay bounded;
    QUIESCENCE batches really were quiet for the whole window."""
    pipe = EventPipeline()
    policy = BatchPolicy(quiescence_ms=quiescence_ms, max_count=max_count)
    poll_period = max(1, quiescence_ms // poll_divisor)

    now = 0
    seq = 0
    batches = []
    ingest_times = {}
    next_poll = 0
    for gap in arrivals:
        now += gap
        while next_poll <= now:
            batch = pipe.poll_batch(policy, now_ms=next_poll)
            if batch:
                batches.append(batch)
            next_poll += poll_period
        event = _event(seq, time_s=now / 1000.0)
        ingest_times[event.event_id] = now
        pipe.ingest(event, now_ms=now)
        seq += 1
    while pipe.depth() > 0:
        batch = pipe.poll_batch(policy, now_ms=next_poll)
        if batch:
            batches.append(batch)
        next_poll += poll_period

    batched_ids = [e.event_id for b in batches for e in b.events]
    # conservation: partition, no duplicates, nothing lost
    assert sorted(batched_ids) == sorted(ingest_times)
    assert len(set(batched_ids)) == len(batched_ids)
    for batch in batches:
        assert 1 <= len(batch.events) <= max_count
        # order within batch follows ingestion order
        indices = [int(e.event_id[1:]) for e in batch.events]
        assert indices == sorted(indices)
        if batch.trigger_reason is TriggerReason.QUIESCENCE:
            last_ingest = max(ingest_times[e.event_id] for e in batch.events)
            assert batch.created_at - last_ingest >= quiescence_ms
