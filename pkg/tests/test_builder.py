import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from trikey.builder import (
    OPTIMIZED,
    SIMPLIFIED,
    GroupTask,
    OccurrenceQueue,
    ThreadTelemetry,
    TripleQueues,
    UtilizationLog,
    extract_first,
    flush_queues,
    process_group,
    process_group_optimized,
    process_group_simplified,
    utilization,
)
from trikey.ingest import Occurrence
from trikey.layout import Span
from trikey.lexicon import BuildConfig
from trikey.oracle import random_records, random_task_spans, reference_postings

FULL = Span(0, 699)
FULL_TASK = GroupTask(FULL, FULL)


def cfg_for(md=5, ws=700):
    return BuildConfig(ws_count=ws, max_distance=md)


def as_sets(sink):
    return {key: set(postings) for key, postings in sink.items() if postings}


class TestQueue:
    def test_fifo(self):
        q = OccurrenceQueue()
        recs = [Occurrence(0, p, 1) for p in range(4)]
        for r in recs:
            q.append(r)
        assert list(q) == recs
        assert q.pop_start() == recs[0]
        assert list(q) == recs[1:]

    def test_pop_empty_raises(self):
        with pytest.raises(IndexError):
            OccurrenceQueue().pop_start()

    def test_singly_linked_forward_walk(self):
        q = OccurrenceQueue()
        a = q.append(Occurrence(0, 0, 1))
        b = q.append(Occurrence(0, 1, 2))
        assert a.next is b
        assert b.next is None


class TestSimplified:
    def test_single_record_no_postings(self):
        sink = {}
        n = process_group_simplified([Occurrence(0, 3, 5)], FULL_TASK, cfg_for(), sink)
        assert n == 0 and as_sets(sink) == {}

    def test_three_lemma_example(self):
        records = [Occurrence(0, 8, 7), Occurrence(0, 10, 2), Occurrence(0, 12, 5)]
        sink = {}
        n = process_group_simplified(records, FULL_TASK, cfg_for(5), sink)
        assert n == 1
        assert as_sets(sink) == {(2, 5, 7): {(0, 10, 2, -2)}}

    def test_equal_rank_dedup(self):
        records = [Occurrence(0, 5, 1), Occurrence(0, 7, 3), Occurrence(0, 9, 3)]
        sink = {}
        process_group_simplified(records, FULL_TASK, cfg_for(5), sink)
        assert as_sets(sink) == {(1, 3, 3): {(0, 5, 2, 4)}}

    def test_document_boundary_flush(self):
        # same positions in two docs; nothing may pair across the boundary
        records = [
            Occurrence(0, 0, 1), Occurrence(0, 1, 2),
            Occurrence(1, 2, 3), Occurrence(1, 3, 4),
        ]
        sink = {}
        process_group_simplified(records, FULL_TASK, cfg_for(5), sink)
        for postings in sink.values():
            docs = {p[0] for p in postings}
            assert len(docs) == 1


class TestOptimized:
    def test_skip_rule_keeps_queues_empty(self):
        # rank outside both ranges and below the group floor enters no queue
        cfg = cfg_for(5, ws=100)
        task = GroupTask(Span(10, 20), Span(40, 60))
        records = [Occurrence(0, 0, 30), Occurrence(0, 1, 35)]
        sink = {}
        n = process_group_optimized(records, task, cfg, sink, instrument=True)
        assert n == 0 and as_sets(sink) == {}

    def test_record_can_enter_all_three_queues(self):
        cfg = cfg_for(5, ws=100)
        task = GroupTask(Span(10, 60), Span(40, 60))
        queues = TripleQueues()
        rec = Occurrence(0, 0, 50)  # in file range and in group range
        queues.first.append(rec)
        queues.second.append(rec)
        queues.third.append(rec)
        sink = {}
        extract_first(queues, task, cfg, sink)
        assert not queues.first and not queues.second and not queues.third

    def test_matches_reference_on_examples(self):
        records = [Occurrence(0, 8, 7), Occurrence(0, 10, 2), Occurrence(0, 12, 5)]
        sink = {}
        process_group_optimized(records, FULL_TASK, cfg_for(5), sink)
        assert as_sets(sink) == {(2, 5, 7): {(0, 10, 2, -2)}}


class TestExtractFirst:
    def build_queues(self, records, task):
        queues = TripleQueues()
        for rec in records:
            if task.first.lo <= rec.rank <= task.first.hi:
                queues.first.append(rec)
            if task.second.lo <= rec.rank <= task.second.hi:
                queues.second.append(rec)
            queues.third.append(rec)
        return queues

    def test_one_eligible_triple(self):
        records = [Occurrence(0, 8, 7), Occurrence(0, 10, 2), Occurrence(0, 12, 5)]
        queues = self.build_queues(sorted(records), FULL_TASK)
        sink = {}
        emitted = extract_first(queues, FULL_TASK, cfg_for(5), sink)
        assert emitted == 1
        assert as_sets(sink) == {(2, 5, 7): {(0, 10, 2, -2)}}
        assert queues.third.start.rec == Occurrence(0, 10, 2)

    def test_companion_before_anchor_gets_negative_offset(self):
        # middle word sits before the anchor in the text
        records = [Occurrence(0, 6, 5), Occurrence(0, 10, 3), Occurrence(0, 12, 8)]
        queues = self.build_queues(records, FULL_TASK)
        sink = {}
        flush_queues(queues, FULL_TASK, cfg_for(5), sink)
        assert (0, 10, -4, 2) in sink[(3, 5, 8)]

    def test_no_eligible_anchor_still_pops_head(self):
        # the only in-range anchor sits beyond the head's reach: nothing emitted
        task = GroupTask(Span(1, 4), FULL)
        records = [Occurrence(0, 0, 5), Occurrence(0, 9, 2)]
        queues = self.build_queues(records, task)
        assert queues.first.start.rec == Occurrence(0, 9, 2)
        sink = {}
        emitted = extract_first(queues, task, cfg_for(5), sink)
        assert emitted == 0 and sink == {}
        assert queues.third.start.rec == Occurrence(0, 9, 2)
        assert queues.first.start.rec == Occurrence(0, 9, 2)

    def test_flush_drains_everything(self):
        records = [Occurrence(0, p, 3) for p in range(7)]
        queues = self.build_queues(records, FULL_TASK)
        sink = {}
        flush_queues(queues, FULL_TASK, cfg_for(3), sink)
        assert not queues.first and not queues.second and not queues.third

    def test_flush_empty_is_noop(self):
        queues = TripleQueues()
        assert flush_queues(queues, FULL_TASK, cfg_for(), {}) == 0


class TestDifferential:
    @pytest.mark.parametrize("seed", range(8))
    def test_variants_match_reference(self, seed):
        rng = random.Random(seed)
        for _ in range(40):
            ws = rng.randint(1, 50)
            records = random_records(rng, ws, docs=rng.randint(1, 5), max_words=120)
            first, second = random_task_spans(rng, ws)
            cfg = BuildConfig(ws_count=ws, max_distance=rng.choice((1, 2, 3, 5, 7, 9)))
            expected = reference_postings(records, cfg.max_distance, first, second)
            for variant in (SIMPLIFIED, OPTIMIZED):
                sink = {}
                process_group(records, GroupTask(first, second, variant), cfg, sink,
                              instrument=True)
                assert as_sets(sink) == expected, (variant, ws, cfg.max_distance)

    @settings(max_examples=60, deadline=None)
    @given(
        data=st.lists(
            st.tuples(st.integers(0, 1), st.integers(0, 40), st.integers(0, 9)),
            max_size=50,
        ),
        md=st.sampled_from((1, 2, 3, 5)),
    )
    def test_variants_match_reference_hypothesis(self, data, md):
        records = [Occurrence(*t) for t in sorted(set(data))]
        cfg = BuildConfig(ws_count=10, max_distance=md)
        task = GroupTask(Span(0, 9), Span(0, 9))
        expected = reference_postings(records, md, task.first, task.second)
        for variant in (SIMPLIFIED, OPTIMIZED):
            sink = {}
            process_group(records, task._replace(variant=variant), cfg, sink)
            assert as_sets(sink) == expected

    def test_emitted_postings_satisfy_invariants(self):
        rng = random.Random(99)
        for _ in range(20):
            ws = rng.randint(2, 40)
            md = rng.choice((1, 3, 5, 9))
            records = random_records(rng, ws, docs=2, max_words=100)
            first, second = random_task_spans(rng, ws)
            sink = {}
            process_group_optimized(records, GroupTask(first, second), cfg_for(md, ws), sink)
            for (a, b, c), postings in sink.items():
                assert a <= b <= c
                assert first.lo <= a <= first.hi
                assert second.lo <= b <= second.hi
                for _, _, d1, d2 in postings:
                    assert 1 <= abs(d1) <= md and 1 <= abs(d2) <= md and d1 != d2


class TestUtilization:
    def test_hand_computed(self):
        u, m = utilization([(1, 10.0), (2, 10.0), (1, 10.0)])
        assert u == pytest.approx(2 / 3)
        assert m == pytest.approx(1 / 3)

    def test_all_threads_simultaneous(self):
        u, m = utilization([(4, 12.5)])
        assert (u, m) == (1.0, 1.0)

    def test_single_thread(self):
        u, m = utilization([(1, 3.0)])
        assert (u, m) == (1.0, 1.0)

    def test_zero_time_rejected(self):
        with pytest.raises(ValueError):
            utilization([(1, 0.0)])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            utilization([])

    @given(
        st.lists(
            st.tuples(st.integers(0, 6), st.floats(0.001, 100)), min_size=1, max_size=30
        ).filter(lambda ev: any(c > 0 for c, _ in ev))
    )
    def test_bounds(self, events):
        u, m = utilization(events)
        assert 0.0 <= u <= 1.0
        assert 0.0 <= m <= 1.0

    def test_telemetry_log_shape(self):
        fake_now = [0.0]
        telemetry = ThreadTelemetry(clock=lambda: fake_now[0])
        fake_now[0] = 1.0
        telemetry.started()
        fake_now[0] = 2.0
        telemetry.started()
        fake_now[0] = 5.0
        telemetry.finished()
        fake_now[0] = 6.0
        telemetry.finished()
        telemetry.log.validate()
        assert telemetry.log.events == [(0, 1.0), (1, 1.0), (2, 3.0), (1, 1.0)]
        u, m = utilization(telemetry.log)
        assert u == pytest.approx((1 + 6 + 1) / (2 * 6))
        assert m == pytest.approx(3 / 6)

    def test_log_validation(self):
        with pytest.raises(ValueError):
            UtilizationLog([(0, 1.0), (2, 1.0)]).validate()
        with pytest.raises(ValueError):
            UtilizationLog([(-1, 1.0)]).validate()


class TestScheduling:
    def test_thread_limit_respected(self):
        # run fake workers through the telemetry under the builder's policy
        from concurrent.futures import ThreadPoolExecutor

        telemetry = ThreadTelemetry()
        limit = 4

        def worker(_):
            telemetry.started()
            time.sleep(0.01)
            telemetry.finished()

        with ThreadPoolExecutor(max_workers=limit) as pool:
            list(pool.map(worker, range(7)))
        telemetry.log.validate()
        peak = max(count for count, _ in telemetry.log.events)
        assert peak <= limit
        # 7 workers through 4 slots: 14 change events
        assert len(telemetry.log.events) == 14
