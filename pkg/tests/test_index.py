"""The index proper: build, seek, point ops, and bin-to-node helping."""

import random
import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from lfindex.bins import OneLevelBin, TwoLevelBin, freeze_bin, insert_bin
from lfindex.core import KEY_MAX, SeekStatus, set_cas_hook
from lfindex.index import IndexConfig, LearnedIndex, ModelNode
from lfindex.verify import SequentialOracle, audit_structure

SMALL = IndexConfig(olb_threshold=4, tlb_fanout=2, tlb_threshold=6)


def slot_type(index, key):
    node, slot, status = index.seek(key)
    if status is SeekStatus.FOUND:
        return "model-key"
    child = node.children[slot].load()
    if child is None:
        return "empty"
    if isinstance(child, OneLevelBin):
        return "olb"
    if isinstance(child, TwoLevelBin):
        return "tlb"
    return "model"


class TestBuild:
    def test_ten_pairs_eleven_child_slots(self):
        index = LearnedIndex.build([(i, i) for i in range(10)])
        assert len(index.root.keys) == 10
        assert len(index.root.children) == 11
        assert all(c.load() is None for c in index.root.children)

    def test_empty_build_answers_absent(self):
        index = LearnedIndex.build([])
        assert len(index.root.keys) == 0
        assert len(index.root.children) == 1
        for k in (0, 5, KEY_MAX):
            assert index.search(k) is None

    def test_built_pairs_are_searchable(self):
        pairs = [(k, k * 3) for k in range(0, 1000, 7)]
        index = LearnedIndex.build(pairs)
        for k, v in pairs:
            assert index.search(k) == v

    def test_clock_and_stamps_start_at_zero(self):
        index = LearnedIndex.build([(1, 1), (2, 2)])
        assert index.clock.read() == 0
        assert all(ref.load().ts == 0 for ref in index.root.versions)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            LearnedIndex.build([(2, 1), (1, 1)])      # unsorted
        with pytest.raises(ValueError):
            LearnedIndex.build([(1, 1), (1, 2)])      # duplicate
        with pytest.raises(ValueError):
            LearnedIndex.build([(1, None)])           # absent payload
        with pytest.raises(ValueError):
            LearnedIndex.build([(-1, 1)])             # below the domain
        with pytest.raises(ValueError):
            LearnedIndex.build([(KEY_MAX + 1, 1)])    # above the domain

    def test_config_validation(self):
        with pytest.raises(ValueError):
            IndexConfig(olb_threshold=0)
        with pytest.raises(ValueError):
            IndexConfig(tlb_fanout=1)
        with pytest.raises(ValueError):
            IndexConfig(tlb_threshold=0)
        with pytest.raises(ValueError):
            IndexConfig(eps_target=0.0)


class TestSeek:
    def test_found_in_root(self):
        index = LearnedIndex.build([(10, 1), (20, 2)])
        node, slot, status = index.seek(10)
        assert status is SeekStatus.FOUND
        assert node is index.root and slot == 0

    def test_empty_slot(self):
        index = LearnedIndex.build([(10, 1), (20, 2)])
        node, slot, status = index.seek(15)
        assert status is SeekStatus.NOT_FOUND
        assert node is index.root and slot == 1

    def test_bin_slot(self):
        index = LearnedIndex.build([(10, 1), (20, 2)])
        index.insert(15, 150)
        node, slot, status = index.seek(16)
        assert status is SeekStatus.MAYBE
        assert slot == 1

    def test_descends_into_retrained_nodes(self):
        index = LearnedIndex.build([(0, 0), (1000, 1)], SMALL)
        keys = list(range(100, 500, 10))
        for k in keys:
            index.insert(k, k)
        # enough inserts for slot 1 to have become a model node
        node, slot, status = index.seek(keys[0])
        assert status is SeekStatus.FOUND
        assert node is not index.root
        for k in keys:
            assert index.search(k) == k

    def test_out_of_domain_keys_rejected(self):
        index = LearnedIndex.build([(10, 1)])
        with pytest.raises(ValueError):
            index.insert(-5, 1)
        with pytest.raises(ValueError):
            index.insert(KEY_MAX + 1, 1)
        with pytest.raises(ValueError):
            index.delete(-5)
        with pytest.raises(ValueError):
            index.search(KEY_MAX + 1)


class TestInsert:
    def test_fresh_key_creates_a_bin(self):
        index = LearnedIndex.build([(10, 1), (20, 2)])
        assert slot_type(index, 15) == "empty"
        assert index.insert(15, 150) is True
        assert slot_type(index, 15) == "olb"
        assert index.search(15) == 150

    def test_same_pair_twice(self):
        index = LearnedIndex.build([])
        assert index.insert(7, 70) is True
        assert index.insert(7, 70) is False
        assert index.insert(7, 71) is True

    def test_model_key_update(self):
        index = LearnedIndex.build([(10, 1)])
        assert index.insert(10, 1) is False
        assert index.insert(10, 9) is True
        assert index.search(10) == 9

    def test_absent_payload_rejected(self):
        index = LearnedIndex.build([])
        with pytest.raises(ValueError):
            index.insert(1, None)

    def test_threshold_trigger_keeps_every_key(self):
        index = LearnedIndex.build([(0, 0), (10_000, 0)])
        keys = list(range(100, 165))  # 65th distinct insert crosses 64
        for k in keys:
            assert index.insert(k, k) is True
        assert slot_type(index, 100) in ("tlb", "model-key", "model")
        for k in keys:
            assert index.search(k) == k

    def test_full_lifecycle_in_one_slot(self):
        index = LearnedIndex.build([(0, 0), (10_000, 0)], SMALL)
        seen = []
        index.transition_log = lambda parent, slot, old, new: seen.append(
            (type(old).__name__ if old is not None else "empty", type(new).__name__))
        for k in range(100, 130):
            index.insert(k, k)
        assert ("empty", "OneLevelBin") in seen
        assert ("OneLevelBin", "TwoLevelBin") in seen
        assert ("TwoLevelBin", "ModelNode") in seen
        legal = {("empty", "OneLevelBin"), ("OneLevelBin", "TwoLevelBin"),
                 ("TwoLevelBin", "ModelNode")}
        assert set(seen) <= legal
        for k in range(100, 130):
            assert index.search(k) == k


class TestDelete:
    def test_delete_then_search_absent(self):
        index = LearnedIndex.build([(10, 1)])
        assert index.delete(10) is True
        assert index.search(10) is None

    def test_absent_key(self):
        index = LearnedIndex.build([(10, 1)])
        assert index.delete(11) is False
        assert index.delete(10) is True
        assert index.delete(10) is False

    def test_delete_and_reinsert(self):
        index = LearnedIndex.build([(10, 1)])
        index.delete(10)
        assert index.insert(10, 2) is True
        assert index.search(10) == 2

    def test_delete_key_living_in_a_bin(self):
        index = LearnedIndex.build([(0, 0), (100, 0)])
        index.insert(50, 5)
        assert index.delete(50) is True
        assert index.search(50) is None
        assert index.delete(50) is False


class TestHelpMakeModel:
    def test_full_olb_becomes_a_tlb_with_same_keys(self):
        index = LearnedIndex.build([(0, 0), (1000, 0)], SMALL)
        for k in (10, 20, 30):
            index.insert(k, k)
        node, slot, status = index.seek(10)
        assert status is SeekStatus.MAYBE
        bin_ = node.children[slot].load()
        assert isinstance(bin_, OneLevelBin)
        index.help_make_model(node, slot, bin_)
        replaced = node.children[slot].load()
        assert isinstance(replaced, TwoLevelBin)
        for k in (10, 20, 30):
            assert index.search(k) == k

    def test_full_tlb_becomes_a_model_node(self):
        cfg = IndexConfig(olb_threshold=4, tlb_fanout=2, tlb_threshold=1024)
        index = LearnedIndex.build([(0, 0), (10**6, 0)], cfg)
        keys = random.Random(1).sample(range(100, 10_000), 1024)
        for k in keys:
            index.insert(k, k)
        node, slot, status = index.seek(keys[0])
        bin_ = node.children[slot].load()
        assert isinstance(bin_, TwoLevelBin)
        assert bin_.size.load() == 1024
        index.help_make_model(node, slot, bin_)
        fresh = node.children[slot].load()
        assert isinstance(fresh, ModelNode)
        assert len(fresh.keys) == 1024
        assert len(fresh.children) == 1025
        assert all(c.load() is None for c in fresh.children)
        for k in keys:
            assert index.search(k) == k

    def test_eight_helpers_install_exactly_one_replacement(self):
        hook_rnd = random.Random(14)
        set_cas_hook(lambda c, ok: time.sleep(1e-5) if hook_rnd.random() < 0.1 else None)
        try:
            for trial in range(20):
                index = LearnedIndex.build([(0, 0), (1000, 0)], SMALL)
                installs = []
                index.transition_log = (
                    lambda parent, slot, old, new: installs.append((slot, type(new).__name__)))
                for k in (10, 20, 30, 40):
                    index.insert(k, k)
                node, slot, status = index.seek(10)
                bin_ = node.children[slot].load()
                barrier = threading.Barrier(8)

                def help_out():
                    barrier.wait()
                    index.help_make_model(node, slot, bin_)

                threads = [threading.Thread(target=help_out) for _ in range(8)]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
                tlb_installs = [i for i in installs if i == (slot, "TwoLevelBin")]
                assert len(tlb_installs) == 1, f"trial {trial}: {installs}"
                for k in (10, 20, 30, 40):
                    assert index.search(k) == k
                report = audit_structure(index)
                assert report.ok, report.findings[:3]
        finally:
            set_cas_hook(None)

    def test_search_never_helps(self):
        index = LearnedIndex.build([(0, 0), (1000, 0)], SMALL)
        for k in (10, 20, 30):
            index.insert(k, k)
        node, slot, _ = index.seek(10)
        bin_ = node.children[slot].load()
        freeze_bin(bin_)
        for k in (10, 20, 30):
            assert index.search(k) == k
        assert node.children[slot].load() is bin_  # untouched by searches


class TestOracleConformance:
    def test_random_ops_match_oracle(self):
        index = LearnedIndex.build([(k, k) for k in range(0, 200, 2)], SMALL)
        oracle = SequentialOracle.from_pairs([(k, k) for k in range(0, 200, 2)])
        rnd = random.Random(2)
        for i in range(20_000):
            r = rnd.random()
            k = rnd.randrange(250)
            if r < 0.45:
                assert index.search(k) == oracle.search(k), (i, k)
            elif r < 0.7:
                v = rnd.randrange(6)
                assert index.insert(k, v) == oracle.insert(k, v), (i, k)
            elif r < 0.9:
                assert index.delete(k) == oracle.delete(k), (i, k)
            else:
                w = rnd.randrange(40)
                assert index.range(k, w) == oracle.range(k, w), (i, k)
        report = audit_structure(index)
        assert report.ok, report.findings[:3]
        assert report.live_map() == oracle.live_map()

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 40), st.integers(0, 3)),
                    max_size=80))
    @settings(max_examples=80, deadline=None)
    def test_op_sequences_match_oracle_property(self, ops):
        cfg = IndexConfig(olb_threshold=3, tlb_fanout=2, tlb_threshold=5)
        index = LearnedIndex.build([(5, 0), (25, 0)], cfg)
        oracle = SequentialOracle.from_pairs([(5, 0), (25, 0)])
        for code, k, v in ops:
            if code == 0:
                assert index.search(k) == oracle.search(k)
            elif code == 1:
                assert index.insert(k, v) == oracle.insert(k, v)
            elif code == 2:
                assert index.delete(k) == oracle.delete(k)
            else:
                assert index.range(k, v * 5) == oracle.range(k, v * 5)
        assert audit_structure(index).ok


class TestLockFreedomProxy:
    def test_every_failed_cas_follows_a_success_on_that_cell(self):
        # the hook fires inside the per-cell critical section, so the event
        # order per cell is exact: a failure means someone already advanced
        # the cell, which is the lock-freedom progress argument
        events = []
        set_cas_hook(lambda cell, ok: events.append((id(cell), ok)))
        try:
            index = LearnedIndex.build([(0, 0), (10**6, 0)], SMALL)
            shares = [list(range(100 + t, 3_000, 4)) for t in range(4)]
            barrier = threading.Barrier(4)

            def run(keys):
                barrier.wait()
                for k in keys:
                    index.insert(k, k)

            threads = [threading.Thread(target=run, args=(s,)) for s in shares]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        finally:
            set_cas_hook(None)
        succeeded = set()
        failures_checked = 0
        for cell, ok in events:
            if ok:
                succeeded.add(cell)
            else:
                assert cell in succeeded, "CAS failed with no prior success on its cell"
                failures_checked += 1
        # the run must actually have produced contention to be meaningful
        assert failures_checked > 0
        for t, share in enumerate(shares):
            for k in share:
                assert index.search(k) == k
