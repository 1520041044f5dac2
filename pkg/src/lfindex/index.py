"""The ordered map: a shallow hierarchy of model nodes fed by bins.

Structure invariants the operations below maintain:

- A model node's keys and model are immutable after construction; only its
  child slots change, and each slot moves monotonically through
  empty -> one-level bin -> two-level bin -> model node, each step a single
  CAS.  The root is never replaced.
- Routing: child slot i of a node covers the open interval between keys
  i-1 and i, so every key has exactly one home path.
- Retrains never move version chains: replacement structures reuse the
  per-key chain heads, so a writer holding a stale bin reference still
  lands its versions where readers of the new structure find them.

Every operation is a retry loop around ``seek``: a slot observed mid-
transition (frozen bin, or a bin replaced under us) sends the operation
back through seek, which terminates because slots only move forward
through a finite lifecycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional

from .core import (
    KEY_MAX,
    AtomicRef,
    GlobalClock,
    SeekResult,
    SeekStatus,
    VersionedValue,
    read_value_latest,
    write_value,
)
from .bins import (
    DEFAULT_OLB_THRESHOLD,
    DEFAULT_TLB_FANOUT,
    DEFAULT_TLB_THRESHOLD,
    UNDER_MAKE_MODEL,
    bin_new,
    collect_frozen,
    delete_bin,
    freeze_bin,
    insert_bin,
    olb_to_tlb,
    search_bin,
)
from .models import (
    DEFAULT_EPS_TARGET,
    fit_linear,
    search_nonroot,
    search_root,
    segment_root,
)
from .rangescan import range_search


@dataclass(frozen=True)
class IndexConfig:
    eps_target: float = DEFAULT_EPS_TARGET
    olb_threshold: int = DEFAULT_OLB_THRESHOLD
    tlb_fanout: int = DEFAULT_TLB_FANOUT
    tlb_threshold: int = DEFAULT_TLB_THRESHOLD

    def __post_init__(self):
        if not self.eps_target > 0:
            raise ValueError("eps_target must be positive")
        if self.olb_threshold < 1 or self.tlb_threshold < 1:
            raise ValueError("bin thresholds must be >= 1")
        if self.tlb_fanout < 2:
            raise ValueError("fanout must be >= 2")


class ModelNode:
    """Immutable keys + model, one version chain per key, m+1 child slots.

    The root carries a piecewise model (``segments``); non-root nodes carry
    a single ``model`` and are searched by galloping, needing no bound.
    """

    __slots__ = ("keys", "model", "segments", "segment_starts", "versions", "children")

    def __init__(self, keys, versions, children, model=None, segments=None,
                 segment_starts=None):
        self.keys = keys
        self.versions = versions    # list[AtomicRef] -> version chain heads
        self.children = children    # list[AtomicRef] -> None | bin | ModelNode
        self.model = model
        self.segments = segments
        self.segment_starts = segment_starts

    def locate(self, key: int) -> tuple[int, bool]:
        if self.segments is not None:
            return search_root(self.keys, self.segments, self.segment_starts, key)
        return search_nonroot(self.keys, self.model, key)


def _retrained_node(keys: list[int], versions: list[AtomicRef]) -> ModelNode:
    model = fit_linear(keys)
    children = [AtomicRef(None) for _ in range(len(keys) + 1)]
    return ModelNode(keys, versions, children, model=model)


class LearnedIndex:
    """Linearizable lock-free ordered map over u64 keys and int payloads."""

    def __init__(self, root: ModelNode, clock: GlobalClock, config: IndexConfig):
        self.root = root
        self.clock = clock
        self.config = config
        # test hook: called as (parent, slot, old, new) after each
        # successful child-slot transition
        self.transition_log: Optional[Callable] = None

    @classmethod
    def build(cls, pairs: Iterable[tuple[int, int]],
              config: IndexConfig | None = None) -> "LearnedIndex":
        """Bulk-load from sorted unique (key, payload) pairs.

        Every loaded version is stamped with time 0; the clock starts at 0.
        Rejects unsorted/duplicate keys, out-of-domain keys, and Absent
        payloads."""
        cfg = config or IndexConfig()
        keys: list[int] = []
        payloads: list[int] = []
        prev = -1
        for k, v in pairs:
            if v is None:
                raise ValueError("payload must not be None")
            if k <= prev or k > KEY_MAX:  # prev starts at -1, so this also rejects negatives
                raise ValueError("pairs must be sorted with unique u64 keys")
            keys.append(k)
            payloads.append(v)
            prev = k
        segments = segment_root(keys, cfg.eps_target)
        starts = [s.start_key for s in segments]
        versions = [AtomicRef(VersionedValue(v, 0)) for v in payloads]
        children = [AtomicRef(None) for _ in range(len(keys) + 1)]
        root = ModelNode(keys, versions, children,
                         segments=segments, segment_starts=starts)
        return cls(root, GlobalClock(0), cfg)

    def seek(self, key: int) -> SeekResult:
        """Walk model nodes toward ``key``.

        FOUND: (node, key index) where the key lives in a model node.
        NOT_FOUND: (node, child slot) where the routing slot is empty, so
        the key is nowhere in the index right now.
        MAYBE: (node, child slot) whose bin may hold the key."""
        node = self.root
        while True:
            ix, found = node.locate(key)
            if found:
                return SeekResult(node, ix, SeekStatus.FOUND)
            slot = ix + 1
            child = node.children[slot].load()
            if child is None:
                return SeekResult(node, slot, SeekStatus.NOT_FOUND)
            if isinstance(child, ModelNode):
                node = child
                continue
            return SeekResult(node, slot, SeekStatus.MAYBE)

    def insert(self, key: int, value: int) -> bool:
        """True if the map changed (new key, or new value for the key)."""
        if value is None:
            raise ValueError("payload must not be None")
        if not 0 <= key <= KEY_MAX:
            raise ValueError("key outside the u64 domain")
        clock = self.clock
        cfg = self.config
        while True:
            node, slot, status = self.seek(key)
            if status is SeekStatus.FOUND:
                return write_value(node.versions[slot], value, clock)
            if status is SeekStatus.NOT_FOUND:
                fresh = bin_new(key, value, clock, cfg.olb_threshold)
                if self._install(node, slot, None, fresh):
                    return True
                continue  # lost to a concurrent first insert; retry
            ref = node.children[slot]
            bin_ = ref.load()
            if bin_ is None or isinstance(bin_, ModelNode):
                continue  # slot advanced underneath us
            if bin_.size.load() >= bin_.threshold:
                self.help_make_model(node, slot, bin_)
                continue
            res = insert_bin(bin_, key, value, clock)
            if res is UNDER_MAKE_MODEL:
                self.help_make_model(node, slot, bin_)
                continue
            return res

    def delete(self, key: int) -> bool:
        """True if the key was present (its latest payload now Absent)."""
        if not 0 <= key <= KEY_MAX:
            raise ValueError("key outside the u64 domain")
        clock = self.clock
        while True:
            node, slot, status = self.seek(key)
            if status is SeekStatus.FOUND:
                head = node.versions[slot]
                if read_value_latest(head, clock) is None:
                    return False
                return write_value(head, None, clock)
            if status is SeekStatus.NOT_FOUND:
                return False
            bin_ = node.children[slot].load()
            if bin_ is None or isinstance(bin_, ModelNode):
                continue
            res = delete_bin(bin_, key, clock)
            if res is UNDER_MAKE_MODEL:
                self.help_make_model(node, slot, bin_)
                continue
            return res

    def search(self, key: int) -> Optional[int]:
        """Latest payload, or None when absent.  Never helps, never blocks;
        its only write is a timestamp assignment on an unstamped head."""
        if not 0 <= key <= KEY_MAX:
            raise ValueError("key outside the u64 domain")
        clock = self.clock
        while True:
            node, slot, status = self.seek(key)
            if status is SeekStatus.FOUND:
                return read_value_latest(node.versions[slot], clock)
            if status is SeekStatus.NOT_FOUND:
                return None
            bin_ = node.children[slot].load()
            if bin_ is None or isinstance(bin_, ModelNode):
                continue
            knode = search_bin(bin_, key)
            if knode is None:
                return None
            return read_value_latest(knode.version, clock)

    def range(self, key: int, width: int,
              max_results: Optional[int] = None) -> list[tuple[int, int]]:
        """Snapshot of live pairs with key <= k <= key+width (saturating),
        ascending, optionally capped at max_results pairs."""
        return range_search(self, key, width, max_results)

    def help_make_model(self, parent: ModelNode, slot: int, bin_: Any) -> None:
        """Drive one lifecycle step for a full or frozen bin, then stop.

        Freeze is idempotent; collection and construction happen on private
        data; the single publish CAS decides the winner and losers simply
        discard their build.  No retry: if the CAS fails the transition
        already happened."""
        cfg = self.config
        freeze_bin(bin_)
        if bin_.is_one_level:
            replacement = olb_to_tlb(bin_, self.clock,
                                     cfg.tlb_fanout, cfg.tlb_threshold)
        else:
            keys, versions = collect_frozen(bin_, self.clock)
            replacement = _retrained_node(keys, versions)
        self._install(parent, slot, bin_, replacement)

    def _install(self, parent: ModelNode, slot: int, expected, new) -> bool:
        ok = parent.children[slot].compare_and_swap(expected, new)
        log = self.transition_log
        if ok and log is not None:
            log(parent, slot, expected, new)
        return ok
