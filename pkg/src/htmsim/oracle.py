"""Post-run correctness checks over commit logs and memory snapshots.

Nothing here touches a live simulator; every check takes plain data.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional


@dataclass
class TxLogEntry:
    """One committed update: a transaction, or a plain store when ``plain``."""

    core: int
    commit_cycle: int
    seq: int
    read_set: list = field(default_factory=list)
    reads: list = field(default_factory=list)  # (word address, value observed)
    writes: list = field(default_factory=list)  # (word address, value written)
    committed: bool = True
    plain: bool = False


@dataclass
class ReplayResult:
    matches: bool
    first_divergence: Optional[tuple] = None  # (word address, expected, actual)
    reason: str = ""

    def __bool__(self):
        return self.matches


def replay_serial(log: Iterable[TxLogEntry], initial: Mapping[int, int],
                  final: Optional[Mapping[int, int]] = None) -> ReplayResult:
    """Apply committed entries one at a time in commit order.

    Every recorded transactional read must see the value the serial replay
    holds at that point. If ``final`` is given, the replayed image must equal
    it word for word (absent words read as zero).
    """
    mem = dict(initial)
    ordered = sorted((e for e in log if e.committed), key=lambda e: (e.commit_cycle, e.seq))
    for e in ordered:
        for addr, seen in e.reads:
            want = mem.get(addr, 0)
            if want != seen:
                return ReplayResult(False, (addr, want, seen),
                                    f"core {e.core} read at cycle {e.commit_cycle}")
        for addr, value in e.writes:
            mem[addr] = value
    if final is not None:
        for addr in sorted(set(mem) | set(final)):
            want, got = mem.get(addr, 0), final.get(addr, 0)
            if want != got:
                return ReplayResult(False, (addr, want, got), "final memory")
    return ReplayResult(True)


@dataclass
class Verdict:
    ok: bool
    problems: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class QueueEvent:
    kind: str  # "enq" or "deq"
    value: int
    producer: int
    cycle: int
    seq: int = 0  # tie-break among events of the same cycle


def check_queue_history(events: Iterable[QueueEvent],
                        residual: Optional[list] = None) -> Verdict:
    """FIFO sanity: no loss or duplication, per-producer order kept.

    ``residual`` is the list of values still in the queue, head first.
    """
    problems = []
    events = sorted(events, key=lambda ev: (ev.cycle, ev.seq))
    enq_order = defaultdict(list)
    enq_cycle = {}
    dequeued = set()
    deq_order = defaultdict(list)
    for ev in events:
        if ev.kind == "enq":
            if ev.value in enq_cycle:
                problems.append(f"value {ev.value} enqueued twice")
            enq_cycle[ev.value] = ev.cycle
            enq_order[ev.producer].append(ev.value)
        elif ev.kind == "deq":
            if ev.value not in enq_cycle:
                problems.append(f"value {ev.value} dequeued but never enqueued")
            elif ev.value in dequeued:
                problems.append(f"value {ev.value} dequeued twice")
            dequeued.add(ev.value)
            deq_order[ev.producer].append(ev.value)
        else:
            problems.append(f"unknown event kind {ev.kind!r}")
    for producer, got in deq_order.items():
        want = enq_order[producer][:len(got)]
        if got != want:
            problems.append(f"producer {producer} values dequeued out of order")
    if residual is not None:
        left = [v for p in sorted(enq_order) for v in enq_order[p] if v not in dequeued]
        if sorted(left) != sorted(residual):
            problems.append(f"residue mismatch: {len(residual)} in queue, {len(left)} expected")
        for producer, values in enq_order.items():
            tail = [v for v in residual if v in set(values)]
            if tail != [v for v in values if v not in dequeued]:
                problems.append(f"producer {producer} residue out of order")
    return Verdict(not problems, problems)


@dataclass(frozen=True)
class ListLayout:
    data: int = 0
    next: int = 64
    prev: int = 128
    flag: int = 192


def check_list_state(read: Callable[[int], int] | Mapping[int, int], head_ptr: int,
                     nodes: Iterable[int] = (), layout: ListLayout = ListLayout()) -> Verdict:
    """Walk the list from ``head_ptr``: ascending keys, mirrored links, no flagged node."""
    if isinstance(read, Mapping):
        mem = read
        read = lambda addr: mem.get(addr, 0)  # noqa: E731
    problems = []
    limit = len(set(nodes)) if nodes else None
    known = set(nodes)
    prev_node, prev_key = 0, None
    node = read(head_ptr)
    steps = 0
    while node:
        steps += 1
        if limit is not None and steps > limit:
            problems.append("cycle in next-links")
            break
        if known and node not in known:
            problems.append(f"link to {node:#x} outside the node arena")
            break
        key = read(node + layout.data)
        if prev_key is not None and key <= prev_key:
            problems.append(f"keys not ascending at {node:#x} ({prev_key} then {key})")
        if read(node + layout.prev) != prev_node:
            problems.append(f"prev-link of {node:#x} does not mirror next-link")
        if read(node + layout.flag):
            problems.append(f"deleted node {node:#x} still reachable")
        prev_node, prev_key = node, key
        node = read(node + layout.next)
    return Verdict(not problems, problems)


def list_keys(read: Callable[[int], int], head_ptr: int, layout: ListLayout = ListLayout(),
              limit: int = 1 << 20) -> list:
    keys = []
    node = read(head_ptr)
    while node and len(keys) < limit:
        keys.append(read(node + layout.data))
        node = read(node + layout.next)
    return keys
