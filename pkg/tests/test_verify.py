"""Verification machinery: oracle, recorder, history checker, audit."""

import dataclasses
import threading

import pytest
from hypothesis import given, settings, strategies as st

from lfindex.core import KEY_MAX, VersionedValue
from lfindex.index import IndexConfig, LearnedIndex
from lfindex.models import Model, Segment
from lfindex.verify import (
    CHECK_MAX_KEYS,
    CHECK_MAX_OPS,
    CHECK_MAX_THREADS,
    HistoryEvent,
    HistoryRecorder,
    SequentialOracle,
    audit_structure,
    check_linearizable,
    format_event,
    parse_event,
    read_history,
    write_history,
)

SMALL = IndexConfig(olb_threshold=4, tlb_fanout=2, tlb_threshold=6)


def ev(thread, op, args, result, inv, res):
    return HistoryEvent(thread, op, tuple(args), result, inv, res)


class TestSequentialOracle:
    def test_insert_reports_mapping_changes_only(self):
        o = SequentialOracle()
        assert o.insert(5, 1) is True
        assert o.insert(5, 1) is False
        assert o.insert(5, 2) is True
        assert o.delete(5) is True
        assert o.insert(5, 2) is True  # revival counts as a change

    def test_delete_and_search(self):
        o = SequentialOracle.from_pairs([(1, 10), (2, 20)])
        assert o.search(1) == 10
        assert o.delete(1) is True
        assert o.search(1) is None
        assert o.delete(1) is False
        assert o.delete(9) is False

    def test_range_slices_live_pairs(self):
        o = SequentialOracle.from_pairs([(k, k) for k in range(10)])
        o.delete(4)
        assert o.range(2, 4) == [(2, 2), (3, 3), (5, 5), (6, 6)]
        assert o.range(2, 4, max_results=2) == [(2, 2), (3, 3)]
        assert o.range(KEY_MAX - 1, KEY_MAX) == []

    def test_history_stamps_increase(self):
        o = SequentialOracle()
        o.insert(5, 1)
        o.insert(5, 2)
        o.delete(5)
        versions = o.history(5)
        assert [p for p, _ in versions] == [1, 2, None]
        stamps = [t for _, t in versions]
        assert stamps == sorted(stamps) and len(set(stamps)) == 3
        assert o.history(404) == []

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 20),
                              st.integers(0, 4)), max_size=120))
    @settings(max_examples=150, deadline=None)
    def test_matches_plain_dict_model(self, ops):
        o = SequentialOracle()
        live = {}
        for code, k, v in ops:
            if code == 0:
                assert o.search(k) == live.get(k)
            elif code == 1:
                changed = live.get(k) != v
                assert o.insert(k, v) is changed
                live[k] = v
            elif code == 2:
                assert o.delete(k) is (k in live)
                live.pop(k, None)
            else:
                want = [(kk, live[kk]) for kk in sorted(live)
                        if k <= kk <= k + v * 5]
                assert o.range(k, v * 5) == want
        assert o.live_map() == live


class TestHistoryRecorder:
    def test_ticks_are_unique_and_bracket_each_op(self):
        index = LearnedIndex.build([])
        rec = HistoryRecorder(index)
        barrier = threading.Barrier(2)

        def worker(name, keys):
            barrier.wait()
            for k in keys:
                rec.run(name, "insert", k, 1)
                rec.run(name, "search", k)

        t0 = threading.Thread(target=worker, args=("T0", [0, 1]))
        t1 = threading.Thread(target=worker, args=("T1", [2, 3]))
        t0.start(), t1.start(), t0.join(), t1.join()
        history = rec.history()
        assert len(history) == 8
        ticks = [t for e in history for t in (e.inv, e.res)]
        assert len(set(ticks)) == 16
        assert all(e.inv < e.res for e in history)
        assert [e.inv for e in history] == sorted(e.inv for e in history)
        assert check_linearizable(history).ok

    def test_results_pass_through(self):
        index = LearnedIndex.build([(3, 30)])
        rec = HistoryRecorder(index)
        assert rec.run("T0", "search", 3) == 30
        assert rec.run("T0", "insert", 3, 30) is False
        assert rec.run("T0", "delete", 3) is True
        assert rec.run("T0", "range", 0, 10) == []
        assert [e.result for e in rec.history()] == [30, False, True, []]


class TestCheckLinearizable:
    def test_empty_history(self):
        r = check_linearizable([])
        assert r.ok and r.witness == [] and r.failing_prefix is None

    def test_sequential_history(self):
        h = [ev("T0", "insert", (5, 1), True, 0, 1),
             ev("T0", "search", (5,), 1, 2, 3),
             ev("T0", "delete", (5,), True, 4, 5),
             ev("T0", "search", (5,), None, 6, 7)]
        r = check_linearizable(h)
        assert r.ok and len(r.witness) == 4

    def test_overlap_allows_reordering(self):
        # the search was invoked first but saw the insert that completed
        # inside its window; only the reordered witness explains it
        h = [ev("T0", "search", (5,), 1, 0, 3),
             ev("T1", "insert", (5, 1), True, 1, 2)]
        r = check_linearizable(h)
        assert r.ok
        assert [e.op for e in r.witness] == ["insert", "search"]

    def test_real_time_order_is_binding(self):
        # the insert finished strictly before the search began, so a None
        # result has no witness no matter the ordering
        h = [ev("T0", "insert", (5, 1), True, 0, 1),
             ev("T1", "search", (5,), None, 2, 3)]
        r = check_linearizable(h)
        assert not r.ok
        assert len(r.failing_prefix) == 2

    def test_phantom_read_rejected_with_minimal_prefix(self):
        h = [ev("T0", "insert", (5, 1), True, 0, 1),
             ev("T0", "search", (5,), 2, 2, 3),
             ev("T0", "delete", (5,), True, 4, 5)]
        r = check_linearizable(h)
        assert not r.ok
        assert [e.op for e in r.failing_prefix] == ["insert", "search"]

    def test_bad_first_op(self):
        r = check_linearizable([ev("T0", "delete", (5,), True, 0, 1)])
        assert not r.ok and len(r.failing_prefix) == 1

    def test_concurrent_identical_inserts_cannot_both_change(self):
        base = [ev("T0", "insert", (5, 1), True, 0, 3),
                ev("T1", "insert", (5, 1), True, 1, 2)]
        assert not check_linearizable(base).ok
        fixed = [base[0], dataclasses.replace(base[1], result=False)]
        assert check_linearizable(fixed).ok

    def test_range_results_are_checked_exactly(self):
        h = [ev("T0", "insert", (3, 7), True, 0, 1),
             ev("T0", "insert", (5, 2), True, 2, 3),
             ev("T0", "range", (3, 2), [(3, 7), (5, 2)], 4, 5)]
        assert check_linearizable(h).ok
        short = h[:2] + [dataclasses.replace(h[2], result=[(3, 7)])]
        assert not check_linearizable(short).ok

    def test_corrupted_recorded_history_is_rejected(self):
        index = LearnedIndex.build([])
        rec = HistoryRecorder(index)
        rec.run("T0", "insert", 1, 1)
        rec.run("T1", "search", 1)
        rec.run("T1", "insert", 2, 5)
        rec.run("T0", "range", 0, 4)
        history = rec.history()
        assert check_linearizable(history).ok
        bad = [dataclasses.replace(e, result=424242) if e.op == "search" else e
               for e in history]
        assert not check_linearizable(bad).ok

    def test_bounds_are_enforced(self):
        long = [ev("T0", "search", (0,), None, 2 * i, 2 * i + 1)
                for i in range(CHECK_MAX_OPS + 1)]
        with pytest.raises(ValueError):
            check_linearizable(long)
        wide = [ev(f"T{i}", "search", (0,), None, 2 * i, 2 * i + 1)
                for i in range(CHECK_MAX_THREADS + 1)]
        with pytest.raises(ValueError):
            check_linearizable(wide)
        keyed = [ev("T0", "search", (i,), None, 2 * i, 2 * i + 1)
                 for i in range(CHECK_MAX_KEYS + 1)]
        with pytest.raises(ValueError):
            check_linearizable(keyed)


history_events = st.builds(
    lambda op, thread, key, extra, val, pairs, inv, res: HistoryEvent(
        thread, op,
        (key, extra) if op in ("insert", "range") else (key,),
        {"insert": extra % 2 == 0, "delete": extra % 2 == 0,
         "search": val, "range": pairs}[op],
        inv, res),
    st.sampled_from(["insert", "delete", "search", "range"]),
    st.text(alphabet="ABT012", min_size=1, max_size=4),
    st.integers(0, KEY_MAX),
    st.integers(0, 2**62),
    st.one_of(st.none(), st.integers(0, 2**62)),
    st.lists(st.tuples(st.integers(0, KEY_MAX), st.integers(0, 2**62)),
             max_size=4),
    st.integers(0, 10**9),
    st.integers(0, 10**9),
)


class TestHistorySerialization:
    def test_known_forms(self):
        cases = [
            (ev("T0", "insert", (6, 1), True, 0, 17), "0 17 T0 insert 6 1 = true"),
            (ev("T1", "delete", (6,), False, 2, 3), "2 3 T1 delete 6 = false"),
            (ev("T2", "search", (6,), None, 4, 5), "4 5 T2 search 6 = none"),
            (ev("T2", "search", (6,), 9, 4, 5), "4 5 T2 search 6 = 9"),
            (ev("T0", "range", (1, 4), [(1, 2), (3, 4)], 6, 7),
             "6 7 T0 range 1 4 = 1:2,3:4"),
            (ev("T0", "range", (1, 4), [], 6, 7), "6 7 T0 range 1 4 = empty"),
        ]
        for event, line in cases:
            assert format_event(event) == line
            assert parse_event(line) == event

    @given(history_events)
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, event):
        assert parse_event(format_event(event)) == event

    def test_format_rejects_junk(self):
        with pytest.raises(ValueError):
            format_event(ev("T 0", "search", (1,), None, 0, 1))
        with pytest.raises(ValueError):
            format_event(ev("T0", "frobnicate", (1,), None, 0, 1))

    @pytest.mark.parametrize("line", [
        "no separator here",
        "0 1 T0 insert = true",              # missing args
        "0 1 T0 insert 5 7 = yes",           # bad boolean token
        "0 1 T0 search 5 = maybe",           # bad payload token
        "x 1 T0 search 5 = none",            # bad tick
        "0 1 T0 frobnicate 5 = none",        # unknown op
        "0 1 T0 range 1 = empty",            # wrong arity
        "0 1 T0 search 5 = none extra",      # trailing junk
    ])
    def test_parse_rejects_malformed(self, line):
        with pytest.raises(ValueError):
            parse_event(line)

    def test_file_round_trip(self, tmp_path):
        index = LearnedIndex.build([])
        rec = HistoryRecorder(index)
        rec.run("T0", "insert", 1, 7)
        rec.run("T1", "range", 0, 3)
        rec.run("T0", "search", 2)
        rec.run("T1", "delete", 1)
        path = tmp_path / "h.log"
        write_history(rec.history(), path)
        assert read_history(path) == rec.history()

    def test_reader_skips_blanks_and_comments(self, tmp_path):
        path = tmp_path / "h.log"
        path.write_text("# a remark\n\n0 1 T0 insert 5 1 = true\n   \n")
        events = read_history(path)
        assert len(events) == 1 and events[0].op == "insert"

    def test_reader_reports_file_and_line(self, tmp_path):
        path = tmp_path / "h.log"
        path.write_text("0 1 T0 insert 5 1 = true\n# fine\n0 1 T0 search = none\n")
        with pytest.raises(ValueError, match=r"h\.log:3: "):
            read_history(path)


class _SearchLiar:
    """Audit double: the real structure, but a point lookup that lies."""

    def __init__(self, inner):
        self.root = inner.root

    def search(self, key):
        return None


class TestAuditStructure:
    def test_fresh_build_is_clean(self):
        pairs = [(k, k * 2) for k in range(0, 500, 5)]
        index = LearnedIndex.build(pairs)
        report = audit_structure(index)
        assert report.ok
        assert report.live_map() == dict(pairs)

    def test_after_stress_matches_oracle(self):
        import random
        index = LearnedIndex.build([], SMALL)
        oracle = SequentialOracle()
        rnd = random.Random(77)
        for _ in range(4_000):
            k = rnd.randrange(120)
            if rnd.random() < 0.7:
                v = rnd.randrange(9)
                index.insert(k, v), oracle.insert(k, v)
            else:
                index.delete(k), oracle.delete(k)
        report = audit_structure(index)
        assert report.ok, report.findings[:3]
        assert report.live_map() == oracle.live_map()

    def test_payloads_keep_deleted_keys(self):
        index = LearnedIndex.build([(1, 1), (2, 2), (3, 3)])
        index.delete(2)
        report = audit_structure(index)
        assert report.ok
        assert report.payloads == {1: 1, 2: None, 3: 3}
        assert report.live_map() == {1: 1, 3: 3}

    def test_detects_out_of_interval_and_duplicate_keys(self):
        index = LearnedIndex.build([(10, 1), (20, 2)])
        index.insert(15, 150)
        olb = index.root.children[1].load()
        index.root.children[0].store(olb)  # same bin reachable twice
        report = audit_structure(index)
        kinds = {f.kind for f in report.findings}
        assert "interval" in kinds and "duplicate-key" in kinds

    def test_detects_size_counter_drift(self):
        index = LearnedIndex.build([(0, 0), (100, 0)])
        index.insert(50, 5)
        olb = index.root.children[1].load()
        olb.size.fetch_add(1)
        report = audit_structure(index)
        assert {f.kind for f in report.findings} == {"size-counter"}

    def test_detects_unstamped_interior_version(self):
        index = LearnedIndex.build([(10, 1)])
        ref = index.root.versions[0]
        mid = VersionedValue(7, vnext=ref.load())      # never stamped
        ref.store(VersionedValue(9, ts=5, vnext=mid))
        report = audit_structure(index, check_seek=False)
        assert "unstamped-version" in {f.kind for f in report.findings}

    def test_detects_timestamp_order_violation(self):
        index = LearnedIndex.build([(10, 1)])
        ref = index.root.versions[0]
        tail = VersionedValue(7, ts=5, vnext=ref.load())
        ref.store(VersionedValue(9, ts=2, vnext=tail))  # older stamp on top
        report = audit_structure(index, check_seek=False)
        assert "timestamp-order" in {f.kind for f in report.findings}

    def test_detects_overstated_model_precision(self):
        index = LearnedIndex.build([(k, 1) for k in (0, 100, 205, 300, 400)])
        seg = index.root.segments[0]
        doctored = Segment(seg.start_key, seg.start_index,
                           Model(seg.model.a, seg.model.b, 1e-12))
        index.root.segments = [doctored]
        report = audit_structure(index)
        assert "model-error" in {f.kind for f in report.findings}

    def test_detects_lookup_walk_disagreement(self):
        index = LearnedIndex.build([(10, 1), (20, 2)])
        report = audit_structure(_SearchLiar(index))
        assert {f.kind for f in report.findings} == {"unreachable-key"}
        assert audit_structure(_SearchLiar(index), check_seek=False).ok
