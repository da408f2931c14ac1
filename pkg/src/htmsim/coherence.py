"""Directory-based MESI coherence over private L1 data caches.

The directory is co-located with the shared L2 and serializes requests per
line: while one request waits for invalidation or downgrade responses, later
requests for the same line queue behind it. Point-to-point messages all take
``hop_latency`` cycles, so two messages between the same endpoints never
reorder.

Each L1 consults a hook object (the per-core HTM engine) when an Invalidate or
Downgrade arrives. The hook may answer now, defer the answer on the L1 stall
queue, or (for a Shared copy held by a token-privileged transaction) refuse
with a Nack, which makes the directory retry the request later.
"""

from __future__ import annotations

import enum
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import SimConfig
from .kernel import Kernel

WORD_SIZE = 8


class LineState(enum.Enum):
    INVALID = "I"
    SHARED = "S"
    EXCLUSIVE = "E"
    MODIFIED = "M"

    @property
    def writable(self) -> bool:
        return self in (LineState.EXCLUSIVE, LineState.MODIFIED)


class MsgKind(enum.Enum):
    GET_SHARED = "GetS"
    GET_EXCLUSIVE = "GetX"
    INVALIDATE = "Inv"
    DOWNGRADE = "Dwn"
    DATA_SHARED = "DataS"
    DATA_EXCLUSIVE = "DataX"
    ACK = "Ack"
    WRITEBACK_DATA = "WbData"
    NACK = "Nack"
    UNBLOCK = "Unblock"


class Delivery(enum.Enum):
    RESPONDED = "responded"
    STALLED = "stalled"


class Decision(enum.Enum):
    """What an L1 does with an incoming Invalidate/Downgrade."""

    RESPOND = "respond"
    RESPOND_AND_ABORT = "respond_and_abort"
    STALL = "stall"
    STALL_TIMED = "stall_timed"
    NACK = "nack"


@dataclass
class CoherenceMsg:
    kind: MsgKind
    line: int
    requester: int
    sender: int = -1  # cache id, or -1 for the directory
    target: int = -1
    kept_copy: bool = False
    data: Optional[list] = None
    sent_cycle: int = 0
    stalled_at: int = -1


@dataclass(frozen=True)
class LineAddr:
    """A line-aligned address split into tag and set index."""

    value: int
    tag: int
    index: int

    @classmethod
    def of(cls, addr: int, line_size: int, num_sets: int) -> "LineAddr":
        line = addr - addr % line_size
        block = line // line_size
        return cls(line, block // num_sets, block % num_sets)


def decompose(addr: int, line_size: int, num_sets: int, word_size: int = WORD_SIZE):
    """Split ``addr`` into (tag, index, word offset, byte offset)."""
    byte = addr % word_size
    word = (addr % line_size) // word_size
    block = addr // line_size
    return block // num_sets, block % num_sets, word, byte


class CacheLine:
    __slots__ = ("addr", "state", "data")

    def __init__(self, addr: int, state: LineState, data: list):
        self.addr = addr
        self.state = state
        self.data = data

    def __repr__(self):
        return f"CacheLine({self.addr:#x}, {self.state.value})"


class NullHook:
    """Coherence hook for a cache with no transactional support."""

    def on_incoming(self, msg: CoherenceMsg) -> Decision:
        return Decision.RESPOND

    def is_protected(self, line: int) -> bool:
        return False

    def on_capacity_conflict(self) -> None:
        pass

    def on_conflict(self, msg: CoherenceMsg) -> None:
        pass


@dataclass
class _Mshr:
    exclusive: bool
    waiters: list = field(default_factory=list)
    deferred: list = field(default_factory=list)


class L1Cache:
    """Private set-associative L1 data cache with per-set LRU replacement."""

    def __init__(self, cid: int, cfg: SimConfig, kernel: Kernel, directory: "Directory"):
        self.cid = cid
        self.cfg = cfg
        self.kernel = kernel
        self.directory = directory
        self.num_sets = cfg.num_sets
        self.sets: list[OrderedDict] = [OrderedDict() for _ in range(self.num_sets)]
        self.hook = NullHook()
        self.stall_queue: deque[CoherenceMsg] = deque()
        self._mshr: dict[int, _Mshr] = {}
        self.stats = {"hits": 0, "misses": 0, "evictions": 0, "writebacks": 0}

    # --- addressing -------------------------------------------------------
    def line_of(self, addr: int) -> int:
        return addr - addr % self.cfg.line_size

    def set_index(self, line: int) -> int:
        return (line // self.cfg.line_size) % self.num_sets

    def word_of(self, addr: int) -> int:
        return (addr % self.cfg.line_size) // WORD_SIZE

    # --- lookups ----------------------------------------------------------
    def lookup(self, line: int) -> Optional[CacheLine]:
        return self.sets[self.set_index(line)].get(line)

    def state_of(self, line: int) -> LineState:
        cl = self.lookup(line)
        return cl.state if cl is not None else LineState.INVALID

    def touch(self, line: int) -> None:
        s = self.sets[self.set_index(line)]
        if line in s:
            s.move_to_end(line)

    def has_pending(self, line: int) -> bool:
        return line in self._mshr

    # --- demand path ------------------------------------------------------
    def acquire(self, line: int, exclusive: bool, on_grant: Callable[[], None]) -> bool:
        """Ensure read (or write) permission for ``line``.

        Returns True on a hit; the caller charges the hit latency. On a miss
        a request goes out after the tag lookup and ``on_grant`` runs in the
        cycle the grant is installed.
        """
        cl = self.lookup(line)
        if cl is not None and (cl.state.writable or not exclusive):
            self.stats["hits"] += 1
            self.touch(line)
            return True
        pending = self._mshr.get(line)
        if pending is not None:
            if exclusive and not pending.exclusive:
                pending.deferred.append(lambda: self._reacquire(line, exclusive, on_grant))
            else:
                pending.waiters.append(on_grant)
            return False
        self.stats["misses"] += 1
        self._mshr[line] = _Mshr(exclusive, [on_grant])
        kind = MsgKind.GET_EXCLUSIVE if exclusive else MsgKind.GET_SHARED
        msg = CoherenceMsg(kind, line, self.cid, sender=self.cid, target=-1)
        self.kernel.schedule(self.cfg.l1_hit_latency, self.directory.send, msg)
        return False

    def _reacquire(self, line, exclusive, on_grant):
        if self.acquire(line, exclusive, on_grant):
            on_grant()

    def receive(self, msg: CoherenceMsg) -> None:
        if msg.kind in (MsgKind.DATA_SHARED, MsgKind.DATA_EXCLUSIVE):
            self._on_grant(msg)
        else:
            self.deliver_request(msg)

    def _on_grant(self, msg: CoherenceMsg) -> None:
        line = msg.line
        state = LineState.EXCLUSIVE if msg.kind is MsgKind.DATA_EXCLUSIVE else LineState.SHARED
        cl = self.lookup(line)
        if cl is None:
            self._install(line, state, list(msg.data))
        else:
            cl.state = state
            cl.data = list(msg.data)
            self.touch(line)
        self._send(CoherenceMsg(MsgKind.UNBLOCK, line, self.cid, sender=self.cid))
        pending = self._mshr.pop(line, None)
        if pending is None:
            return
        for fn in pending.waiters:
            fn()
        for fn in pending.deferred:
            fn()

    # --- replacement ------------------------------------------------------
    def choose_victim(self, index: int) -> Optional[int]:
        """LRU line in set ``index`` not protected by an active transaction."""
        for line in self.sets[index]:
            if not self.hook.is_protected(line):
                return line
        return None

    def _install(self, line: int, state: LineState, data: list) -> None:
        index = self.set_index(line)
        s = self.sets[index]
        if len(s) >= self.cfg.l1_assoc:
            victim = self.choose_victim(index)
            if victim is None:
                self.hook.on_capacity_conflict()
                victim = self.choose_victim(index)
                if victim is None:
                    victim = next(iter(s))
            self.evict(victim)
        s[line] = CacheLine(line, state, data)

    def evict(self, line: int) -> None:
        s = self.sets[self.set_index(line)]
        cl = s.pop(line, None)
        if cl is None:
            return
        self.stats["evictions"] += 1
        dirty = cl.state is LineState.MODIFIED
        if dirty:
            self.stats["writebacks"] += 1
        self.directory.evict_sync(self.cid, line, cl.data if dirty else None)

    def self_downgrade(self, line: int) -> None:
        """Give up write permission on a resident line, keeping a Shared copy."""
        cl = self.lookup(line)
        if cl is None or not cl.state.writable:
            return
        self.directory.downgrade_sync(
            self.cid, line, cl.data if cl.state is LineState.MODIFIED else None)
        cl.state = LineState.SHARED

    # --- forwarded requests -----------------------------------------------
    def deliver_request(self, msg: CoherenceMsg) -> Delivery:
        assert msg.kind in (MsgKind.INVALIDATE, MsgKind.DOWNGRADE)
        decision = self.hook.on_incoming(msg)
        if decision in (Decision.STALL, Decision.STALL_TIMED):
            self.stall_queue.append(msg)
            return Delivery.STALLED
        if decision is Decision.NACK:
            self._send(CoherenceMsg(MsgKind.NACK, msg.line, msg.requester, sender=self.cid))
            return Delivery.STALLED
        self.respond(msg)
        if decision is Decision.RESPOND_AND_ABORT:
            self.hook.on_conflict(msg)
        return Delivery.RESPONDED

    def respond(self, msg: CoherenceMsg) -> None:
        line = msg.line
        cl = self.lookup(line)
        if msg.kind is MsgKind.INVALIDATE:
            if cl is not None:
                if cl.state is LineState.MODIFIED:
                    self.directory.write_l2(line, cl.data)
                del self.sets[self.set_index(line)][line]
            reply = CoherenceMsg(MsgKind.ACK, line, msg.requester, sender=self.cid)
        else:
            if cl is None:
                reply = CoherenceMsg(MsgKind.ACK, line, msg.requester, sender=self.cid)
            else:
                if cl.state is LineState.MODIFIED:
                    self.directory.write_l2(line, cl.data)
                cl.state = LineState.SHARED
                reply = CoherenceMsg(MsgKind.WRITEBACK_DATA, line, msg.requester,
                                     sender=self.cid, kept_copy=True)
        self._send(reply)

    def release_stalled(self) -> None:
        """Answer every deferred request, oldest first."""
        while self.stall_queue:
            self.respond(self.stall_queue.popleft())

    def _send(self, msg: CoherenceMsg) -> None:
        msg.target = -1
        self.directory.send(msg)


@dataclass
class _Pending:
    request: CoherenceMsg
    start: int
    awaiting: set
    kept: set = field(default_factory=set)
    acked: set = field(default_factory=set)
    nacked: bool = False
    granted: bool = False


@dataclass
class DirectoryEntry:
    line: int
    sharers: set = field(default_factory=set)
    owner: Optional[int] = None
    busy: Optional[_Pending] = None
    pending: deque = field(default_factory=deque)


class Directory:
    """Flat directory co-located with the shared L2; also the backing store."""

    def __init__(self, cfg: SimConfig, kernel: Kernel, trace: bool = False):
        self.cfg = cfg
        self.kernel = kernel
        self.caches: list[L1Cache] = []
        self.entries: dict[int, DirectoryEntry] = {}
        self.l2: dict[int, list] = {}
        self.trace_enabled = trace
        self.trace: list[tuple] = []
        self.stats = {"requests": 0, "invalidations": 0, "downgrades": 0, "nacks": 0,
                      "retries": 0}
        self.on_swmr_violation: Optional[Callable] = None

    # --- backing store ----------------------------------------------------
    def l2_line(self, line: int) -> list:
        data = self.l2.get(line)
        if data is None:
            data = [0] * self.cfg.words_per_line
            self.l2[line] = data
        return data

    def write_l2(self, line: int, data: list) -> None:
        self.l2[line] = list(data)

    def entry(self, line: int) -> DirectoryEntry:
        e = self.entries.get(line)
        if e is None:
            e = DirectoryEntry(line)
            self.entries[line] = e
        return e

    # --- synchronous cache-side updates -----------------------------------
    def evict_sync(self, cid: int, line: int, dirty_data: Optional[list]) -> None:
        if dirty_data is not None:
            self.write_l2(line, dirty_data)
        e = self.entry(line)
        e.sharers.discard(cid)
        if e.owner == cid:
            e.owner = None

    def downgrade_sync(self, cid: int, line: int, dirty_data: Optional[list]) -> None:
        if dirty_data is not None:
            self.write_l2(line, dirty_data)
        e = self.entry(line)
        if e.owner == cid:
            e.owner = None
        e.sharers.add(cid)

    # --- messaging --------------------------------------------------------
    def send(self, msg: CoherenceMsg) -> None:
        """Put ``msg`` on the interconnect; it arrives one hop later."""
        msg.sent_cycle = self.kernel.now
        if self.trace_enabled:
            self.trace.append((self.kernel.now, msg.kind.value, msg.line, msg.requester,
                               msg.sender, msg.target))
        if msg.target >= 0:
            self.kernel.schedule(self.cfg.hop_latency, self.caches[msg.target].receive, msg)
        else:
            self.kernel.schedule(self.cfg.hop_latency, self.receive, msg)

    def receive(self, msg: CoherenceMsg) -> None:
        if msg.kind in (MsgKind.GET_SHARED, MsgKind.GET_EXCLUSIVE):
            self.stats["requests"] += 1
            e = self.entry(msg.line)
            if e.busy is None and not e.pending:
                self._process(e, msg)
            else:
                e.pending.append(msg)
        else:
            self._on_response(msg)

    def _process(self, e: DirectoryEntry, msg: CoherenceMsg) -> None:
        req = msg.requester
        if msg.kind is MsgKind.GET_SHARED:
            targets = {e.owner} if e.owner is not None and e.owner != req else set()
            fwd = MsgKind.DOWNGRADE
        else:
            targets = set(e.sharers)
            if e.owner is not None:
                targets.add(e.owner)
            targets.discard(req)
            fwd = MsgKind.INVALIDATE
        e.busy = _Pending(msg, self.kernel.now, set(targets))
        if not targets:
            self.kernel.schedule(self.cfg.l2_latency, self._complete, e)
            return
        key = "downgrades" if fwd is MsgKind.DOWNGRADE else "invalidations"
        for t in sorted(targets):
            self.stats[key] += 1
            self.send(CoherenceMsg(fwd, e.line, req, sender=-1, target=t))

    def _on_response(self, msg: CoherenceMsg) -> None:
        e = self.entries[msg.line]
        p = e.busy
        if msg.kind is MsgKind.UNBLOCK:
            assert p is not None and p.granted and p.request.requester == msg.sender
            e.busy = None
            self._next(e)
            return
        assert p is not None and msg.sender in p.awaiting, f"unexpected response {msg}"
        p.awaiting.discard(msg.sender)
        if msg.kind is MsgKind.NACK:
            self.stats["nacks"] += 1
            p.nacked = True
        else:
            p.acked.add(msg.sender)
            if msg.kept_copy:
                p.kept.add(msg.sender)
        if not p.awaiting:
            wait = max(0, p.start + self.cfg.l2_latency - self.kernel.now)
            self.kernel.schedule(wait, self._complete, e)

    def _complete(self, e: DirectoryEntry) -> None:
        p = e.busy
        msg = p.request
        req = msg.requester
        if p.nacked:
            # acked sharers did lose their copies; the nacking one keeps its copy
            for cid in p.acked:
                e.sharers.discard(cid)
                if e.owner == cid:
                    e.owner = None
            e.busy = None
            self.stats["retries"] += 1
            self.kernel.schedule(self.cfg.l2_latency, self._retry, e, msg)
            self._next(e)
            return
        if msg.kind is MsgKind.GET_SHARED:
            if e.owner is not None and e.owner != req:
                if e.owner in p.kept:
                    e.sharers.add(e.owner)
                e.owner = None
            e.sharers.add(req)
            grant = MsgKind.DATA_SHARED
        else:
            e.sharers.clear()
            e.owner = req
            grant = MsgKind.DATA_EXCLUSIVE
        # the line stays blocked until the requester confirms the install
        p.granted = True
        self.send(CoherenceMsg(grant, e.line, req, sender=-1, target=req,
                               data=list(self.l2_line(e.line))))
        if self.cfg.check_invariants:
            self.check_swmr(e.line)

    def _retry(self, e: DirectoryEntry, msg: CoherenceMsg) -> None:
        if e.busy is None and not e.pending:
            self._process(e, msg)
        else:
            e.pending.append(msg)

    def _next(self, e: DirectoryEntry) -> None:
        if e.busy is None and e.pending:
            self._process(e, e.pending.popleft())

    # --- invariants -------------------------------------------------------
    def holders(self, line: int) -> dict:
        out = {}
        for c in self.caches:
            st = c.state_of(line)
            if st is not LineState.INVALID:
                out[c.cid] = st
        return out

    def check_swmr(self, line: int) -> None:
        states = list(self.holders(line).values())
        writers = sum(1 for s in states if s.writable)
        readers = sum(1 for s in states if s is LineState.SHARED)
        if writers > 1 or (writers == 1 and readers > 0):
            detail = f"line {line:#x}: {self.holders(line)}"
            if self.on_swmr_violation is not None:
                self.on_swmr_violation(detail)
            raise AssertionError("single-writer/multiple-reader violated at " + detail)
