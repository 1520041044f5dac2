"""Lock-free bins: sorted linked lists that absorb writes between retrains.

A one-level bin is a sorted singly-linked list of key nodes whose links
carry a freeze bit (MarkedLink).  A two-level bin fans the key space out
over a fixed array of child lists behind immutable separators.  Keys are
never physically removed: deletion writes an Absent version, so the only
stolen link bit is the freeze flag.

Mutators that observe a frozen link back off with UNDER_MAKE_MODEL so the
caller can help retrain; readers ignore freeze bits entirely.  Freezing is
idempotent and proceeds head to tail, so a successful splice is always at or
ahead of the freeze frontier and will be collected.
"""

from __future__ import annotations

from bisect import bisect_left
from typing import Any, Optional

from .core import (
    AtomicInt,
    AtomicRef,
    GlobalClock,
    MarkedLink,
    VersionedValue,
    init_ts,
    read_value_at,
    read_value_latest,
    write_value,
    TOMBSTONE,
)

DEFAULT_OLB_THRESHOLD = 64
DEFAULT_TLB_FANOUT = 8
DEFAULT_TLB_THRESHOLD = 1024


class _UnderMakeModel:
    __slots__ = ()

    def __repr__(self):
        return "UNDER_MAKE_MODEL"


#: Returned by bin mutators iff they observed a frozen link; the bin is
#: being retrained and the caller should help finish the replacement.
UNDER_MAKE_MODEL = _UnderMakeModel()


class KNode:
    """One key in a bin list: immutable key, version-chain head, marked link."""

    __slots__ = ("item", "version", "next")

    def __init__(self, item: int, version: AtomicRef, nxt: AtomicRef):
        self.item = item
        self.version = version  # AtomicRef -> VersionedValue chain head
        self.next = nxt         # AtomicRef -> MarkedLink

    def __repr__(self):
        return f"KNode({self.item})"


class OneLevelBin:
    __slots__ = ("head", "size", "threshold")
    is_one_level = True

    def __init__(self, threshold: int = DEFAULT_OLB_THRESHOLD):
        self.head = AtomicRef(MarkedLink(None, False))
        self.size = AtomicInt(0)    # distinct keys spliced, not value updates
        self.threshold = threshold


class TwoLevelBin:
    """F child lists behind F-1 immutable separators.

    Child i owns keys in (keys[i-1], keys[i]]; the last child is unbounded
    above.  size totals distinct keys across all children.
    """

    __slots__ = ("keys", "children", "size", "threshold")
    is_one_level = False

    def __init__(self, keys: list[int], children: list[OneLevelBin],
                 size: int, threshold: int = DEFAULT_TLB_THRESHOLD):
        assert len(children) == len(keys) + 1
        self.keys = keys
        self.children = children
        self.size = AtomicInt(size)
        self.threshold = threshold


def bin_new(key: int, value: int, clock: GlobalClock,
            threshold: int = DEFAULT_OLB_THRESHOLD) -> OneLevelBin:
    """Fresh one-level bin holding a single stamped (key, value) pair."""
    ver = VersionedValue(value)
    init_ts(ver, clock)
    node = KNode(key, AtomicRef(ver), AtomicRef(MarkedLink(None, False)))
    olb = OneLevelBin(threshold)
    olb.head = AtomicRef(MarkedLink(node, False))
    olb.size = AtomicInt(1)
    return olb


def _olb_insert(olb: OneLevelBin, key: int, value: int, clock: GlobalClock):
    """Returns (result, spliced): result True/False/UNDER_MAKE_MODEL.

    Walks to the insertion point re-checking the freeze bit on every link;
    a lost CAS re-reads the same predecessor link and keeps walking, so a
    storm of inserts makes progress without restarting from the head.
    """
    prev_ref = olb.head
    link = prev_ref.load()
    while True:
        if link.frozen:
            return UNDER_MAKE_MODEL, False
        node = link.target
        if node is not None and node.item < key:
            prev_ref = node.next
            link = prev_ref.load()
            continue
        if node is not None and node.item == key:
            return write_value(node.version, value, clock), False
        fresh = VersionedValue(value)
        knode = KNode(key, AtomicRef(fresh), AtomicRef(MarkedLink(node, False)))
        if prev_ref.compare_and_swap(link, MarkedLink(knode, False)):
            # stamp before reporting success: an unstamped splice could be
            # assigned a too-new time by a later scan and vanish from
            # snapshots that must include it
            init_ts(fresh, clock)
            olb.size.fetch_add(1)
            return True, True
        link = prev_ref.load()


def _olb_delete(olb: OneLevelBin, key: int, clock: GlobalClock):
    ref = olb.head
    while True:
        link = ref.load()
        if link.frozen:
            return UNDER_MAKE_MODEL
        node = link.target
        if node is None or node.item > key:
            return False
        if node.item == key:
            if read_value_latest(node.version, clock) is None:
                return False
            return write_value(node.version, None, clock)
        ref = node.next


def _olb_find(olb: OneLevelBin, key: int) -> Optional[KNode]:
    node = olb.head.load().target
    while node is not None and node.item < key:
        node = node.next.load().target
    if node is not None and node.item == key:
        return node
    return None


def _child_of(tlb: TwoLevelBin, key: int) -> OneLevelBin:
    return tlb.children[bisect_left(tlb.keys, key)]


def insert_bin(bin_: Any, key: int, value: int, clock: GlobalClock):
    """Insert or update; True/False per the map contract, UNDER_MAKE_MODEL
    if a freeze was observed.  Two-level size counts splices once, at the top.
    """
    if bin_.is_one_level:
        result, _ = _olb_insert(bin_, key, value, clock)
        return result
    result, spliced = _olb_insert(_child_of(bin_, key), key, value, clock)
    if spliced:
        bin_.size.fetch_add(1)
    return result


def delete_bin(bin_: Any, key: int, clock: GlobalClock):
    if bin_.is_one_level:
        return _olb_delete(bin_, key, clock)
    return _olb_delete(_child_of(bin_, key), key, clock)


def search_bin(bin_: Any, key: int) -> Optional[KNode]:
    """Find the node for ``key`` if spliced, frozen or not.  Read-only."""
    if bin_.is_one_level:
        return _olb_find(bin_, key)
    return _olb_find(_child_of(bin_, key), key)


def _olb_scan(olb: OneLevelBin, lo: int, hi: int, ts: int, out: list,
              clock: GlobalClock, limit: Optional[int]) -> None:
    node = olb.head.load().target
    while node is not None and node.item < lo:
        node = node.next.load().target
    while node is not None and node.item <= hi:
        if limit is not None and len(out) >= limit:
            return
        val = read_value_at(node.version, ts, clock)
        if val is not None and val is not TOMBSTONE:
            out.append((node.item, val))
        node = node.next.load().target


def scan_bin(bin_: Any, lo: int, hi: int, ts: int, out: list,
             clock: GlobalClock, limit: Optional[int] = None) -> None:
    """Append (key, value-at-ts) pairs with lo <= key <= hi, ascending.

    Ignores freeze bits; skips keys deleted at ts or younger than ts."""
    if bin_.is_one_level:
        _olb_scan(bin_, lo, hi, ts, out, clock, limit)
        return
    a = bisect_left(bin_.keys, lo)   # child owning lo
    b = bisect_left(bin_.keys, hi)   # child owning hi
    for child in bin_.children[a:b + 1]:
        if limit is not None and len(out) >= limit:
            return
        _olb_scan(child, lo, hi, ts, out, clock, limit)


def freeze_bin(bin_: Any) -> None:
    """Set the freeze bit on every link, head to tail.  Idempotent; safe to
    race with other freezers and with splices (a winning splice lands ahead
    of the frontier and gets frozen too)."""
    if bin_.is_one_level:
        _freeze_olb(bin_)
    else:
        for child in bin_.children:
            _freeze_olb(child)


def _freeze_olb(olb: OneLevelBin) -> None:
    ref = olb.head
    while True:
        link = ref.load()
        if not link.frozen:
            if not ref.compare_and_swap(link, MarkedLink(link.target, True)):
                continue  # a splice or another freezer won; re-read this link
        node = link.target
        if node is None:
            return
        ref = node.next


def collect_frozen(bin_: Any, clock: GlobalClock) -> tuple[list[int], list[AtomicRef]]:
    """Keys and version-chain heads of a fully frozen bin, in key order.

    Deleted keys are retained (their latest payload is Absent); every
    collected head gets its timestamp assigned so nothing leaves a bin
    unstamped."""
    keys: list[int] = []
    versions: list[AtomicRef] = []
    if bin_.is_one_level:
        _collect_olb(bin_, keys, versions, clock)
    else:
        for child in bin_.children:
            _collect_olb(child, keys, versions, clock)
    return keys, versions


def _collect_olb(olb: OneLevelBin, keys: list, versions: list,
                 clock: GlobalClock) -> None:
    link = olb.head.load()
    assert link.frozen, "collect requires a frozen bin"
    node = link.target
    while node is not None:
        keys.append(node.item)
        versions.append(node.version)
        init_ts(node.version.load(), clock)
        link = node.next.load()
        assert link.frozen, "collect requires a frozen bin"
        node = link.target


def _olb_from_sorted(keys: list[int], versions: list[AtomicRef],
                     threshold: int) -> OneLevelBin:
    olb = OneLevelBin(threshold)
    link = MarkedLink(None, False)
    for item, ver in zip(reversed(keys), reversed(versions)):
        node = KNode(item, ver, AtomicRef(link))
        link = MarkedLink(node, False)
    olb.head = AtomicRef(link)
    olb.size = AtomicInt(len(keys))
    return olb


def olb_to_tlb(olb: OneLevelBin, clock: GlobalClock,
               fanout: int = DEFAULT_TLB_FANOUT,
               threshold: int = DEFAULT_TLB_THRESHOLD) -> TwoLevelBin:
    """Split a frozen one-level bin into a fresh two-level bin.

    Keys are dealt out ceil-first (the first n mod F children get one
    extra), separators are each child's last key.  Child lists are rebuilt
    with fresh nodes and unfrozen links but REUSE the version-chain heads,
    so writers still holding the old bin update the same chains the new bin
    reads."""
    keys, versions = collect_frozen(olb, clock)
    n = len(keys)
    assert n > 0, "cannot split an empty bin"
    q, r = divmod(n, fanout)
    children: list[OneLevelBin] = []
    seps: list[int] = []
    pos = 0
    for i in range(fanout):
        take = q + 1 if i < r else q
        children.append(_olb_from_sorted(keys[pos:pos + take],
                                         versions[pos:pos + take],
                                         olb.threshold))
        pos += take
        if i < fanout - 1:
            # an empty tail child inherits the running last key
            seps.append(keys[pos - 1] if pos > 0 else keys[0])
    return TwoLevelBin(seps, children, n, threshold)
