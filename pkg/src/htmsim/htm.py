"""Per-core HTM engine built on TSHRs next to the L1 data cache.

A load-linked outside a transaction starts one. Later load-linked reads join
the read-set and stores are buffered in TSHR line images while the line stays
Shared. The closing store-conditional asks for exclusive ownership of every
write-set line and commits once all grants are in. Conflicts are detected
eagerly from the invalidate/downgrade stream and always abort the receiving
transaction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from .coherence import CoherenceMsg, Decision, L1Cache, LineState, MsgKind
from .config import FpMechanism, SimConfig
from .kernel import Kernel
from .oracle import TxLogEntry
from .progress import AbortStreak, PrivilegeMonitor, RepeatDetector, SeqAcqState, TokenState


class TxState(enum.Enum):
    OUTSIDE = "Outside"
    INSIDE_NON_ABORT = "InsideNonAbort"
    INSIDE_ABORT = "InsideAbort"
    EXCL_ACQ = "ExclAcq"
    EXCL_ACQ_STEP = "ExclAcqStep"
    COMMIT = "CommitPhase"
    ABORT = "AbortPhase"


class AbortKind(enum.Enum):
    INVALIDATE_HIT = "inval"
    DOWNGRADE_HIT = "dwng"
    CAPACITY = "capacity"
    TSHR_OVERFLOW = "overflow"
    INTERRUPT = "interrupt"


@dataclass(frozen=True)
class AbortCause:
    kind: AbortKind
    pre_sc: bool


@dataclass(frozen=True)
class TxOutcome:
    committed: bool
    cause: Optional[AbortCause] = None

    @property
    def sc_result(self) -> int:
        return 0 if self.committed else 1


@dataclass
class Tshr:
    tag: Optional[int] = None
    data: Optional[list] = None
    write_set: bool = False
    valid: bool = False
    left_over: bool = False


@dataclass
class TxContext:
    state: TxState = TxState.OUTSIDE
    attempt: int = 0
    start_cycle: int = 0
    sc_cycle: Optional[int] = None
    abort_cause: Optional[AbortCause] = None
    holds_token: bool = False
    token_requested: bool = False
    seq: Optional[SeqAcqState] = None
    reads: list = field(default_factory=list)
    writes: dict = field(default_factory=dict)
    sc_callback: Optional[Callable] = None
    proactive_wait: Optional[tuple] = None
    interrupt_pending: bool = False

    @property
    def active_flag(self) -> bool:
        return self.state is not TxState.OUTSIDE

    @property
    def running(self) -> bool:
        """Still executing the body (doomed or not)."""
        return self.state in (TxState.INSIDE_NON_ABORT, TxState.INSIDE_ABORT)


@dataclass
class TxRecord:
    start: int
    end: int
    outcome: TxOutcome
    read_lines: int
    write_lines: int
    sc_cycle: Optional[int] = None
    commit_start: Optional[int] = None


@dataclass
class EngineStats:
    commits: int = 0
    aborts: dict = field(default_factory=lambda: {k: 0 for k in AbortKind})
    presc: int = 0
    token_requests: int = 0
    token_grants_in_time: int = 0
    proactive_requests: int = 0
    stalled_msgs: int = 0
    nacks_sent: int = 0
    seq_rounds: int = 0
    max_tshrs_used: int = 0
    max_stall: int = 0
    sc_outside: int = 0

    @property
    def aborts_total(self) -> int:
        return sum(self.aborts.values())


_LD, _LL, _ST, _SC = "ld", "ll", "st", "sc"


class HtmEngine:
    """Transaction logic for one core; installs itself as its L1's hook."""

    def __init__(self, cid: int, cfg: SimConfig, kernel: Kernel, l1: L1Cache,
                 monitor: Optional[PrivilegeMonitor] = None, sink=None, trace: bool = False):
        self.cid = cid
        self.cfg = cfg
        self.kernel = kernel
        self.l1 = l1
        self.monitor = monitor or PrivilegeMonitor()
        self.sink = sink
        self.tshrs = [Tshr() for _ in range(cfg.num_tshrs)]
        self.tx = TxContext()
        self.detector = RepeatDetector(cfg.repeated_match_threshold)
        self.streak = AbortStreak(cfg.abort_streak_bits)
        self.token = TokenState(cfg.token_line)
        self.stats = EngineStats()
        self.trace_enabled = trace
        self.records: list[TxRecord] = []
        self.outcomes: list[TxOutcome] = []
        self._attempt = 0
        self._commit_start = None
        self.last_commit: Optional[TxLogEntry] = None
        l1.hook = self

    # --- helpers ----------------------------------------------------------
    @property
    def fp(self) -> FpMechanism:
        return self.cfg.fp_mechanism

    def find(self, line: int) -> Optional[Tshr]:
        for t in self.tshrs:
            if t.valid and t.tag == line:
                return t
        return None

    def write_lines(self) -> list:
        return [t.tag for t in self.tshrs if t.valid and t.write_set]

    def read_lines(self) -> list:
        return [t.tag for t in self.tshrs if t.valid and not t.write_set]

    def tshrs_in_use(self) -> int:
        return sum(1 for t in self.tshrs if t.valid)

    def _track(self, line: int) -> Optional[Tshr]:
        t = self.find(line)
        if t is not None:
            return t
        invalid = [t for t in self.tshrs if not t.valid]
        pick = next((t for t in invalid if t.left_over and t.tag == line), None)
        if pick is None:
            pick = next((t for t in invalid if not t.left_over), None)
        if pick is None and invalid:
            pick = invalid[0]
        if pick is None:
            self._doom(AbortKind.TSHR_OVERFLOW)
            return None
        pick.tag, pick.valid, pick.left_over = line, True, False
        pick.write_set, pick.data = False, None
        self.stats.max_tshrs_used = max(self.stats.max_tshrs_used, self.tshrs_in_use())
        return pick

    # --- core-facing operations -------------------------------------------
    def load(self, addr: int, callback: Callable[[int], None], linked: bool = False) -> None:
        if linked and self.tx.state is TxState.OUTSIDE:
            self._begin(lambda: self._access(addr, _LL, None, callback))
        else:
            self._access(addr, _LL if linked else _LD, None, callback)

    def store(self, addr: int, value: int, callback: Callable[[None], None]) -> None:
        self._access(addr, _ST, value, callback)

    def store_conditional(self, addr: int, value: int, callback: Callable[[int], None]) -> None:
        if self.tx.state is TxState.OUTSIDE:
            self.stats.sc_outside += 1
            self.kernel.schedule(self.cfg.l1_hit_latency, callback, 1)
            return
        self._access(addr, _SC, value, callback)

    def interrupt(self) -> None:
        if self.tx.state is not TxState.OUTSIDE:
            self._doom(AbortKind.INTERRUPT)

    # --- transaction start -------------------------------------------------
    def _begin(self, then: Callable[[], None]) -> None:
        self._attempt += 1
        self.tx = tx = TxContext(TxState.INSIDE_NON_ABORT, self._attempt, self.kernel.now)
        self.detector.reset()
        if self.fp is not FpMechanism.TOKEN:
            then()
            return
        # token check at start: one tag lookup
        if self.l1.state_of(self.token.token_line).writable:
            self._enter_privileged()
        elif self.streak.saturated:
            tx.token_requested = True
            self.stats.token_requests += 1
            self.stats.proactive_requests += 1
            ev = self.kernel.schedule(1 + self.cfg.token_wait_window,
                                      self._proactive_timeout, tx.attempt)
            tx.proactive_wait = (then, ev)
            self.kernel.schedule(1, self._request_token)
            return
        self.kernel.schedule(1, then)

    def _request_token(self) -> None:
        if self.l1.acquire(self.token.token_line, True, self._on_token_grant):
            self._on_token_grant()

    def _proactive_timeout(self, attempt: int) -> None:
        tx = self.tx
        if tx.attempt == attempt and tx.proactive_wait is not None:
            then, _ = tx.proactive_wait
            tx.proactive_wait = None
            then()

    def _on_token_grant(self) -> None:
        tx = self.tx
        if (tx.state is TxState.INSIDE_NON_ABORT and tx.token_requested
                and not tx.holds_token
                and self.l1.state_of(self.token.token_line).writable):
            self.stats.token_grants_in_time += 1
            self._enter_privileged()
        if tx.proactive_wait is not None:
            then, ev = tx.proactive_wait
            tx.proactive_wait = None
            ev.cancel()
            then()

    def _enter_privileged(self) -> None:
        self.tx.holds_token = True
        self.token.held = True
        self.monitor.enter(self.cid)

    def _leave_privileged(self) -> None:
        if self.tx.holds_token:
            self.tx.holds_token = False
            self.token.held = False
            self.monitor.leave(self.cid)

    def _on_flagged(self) -> None:
        tx = self.tx
        if self.fp is not FpMechanism.TOKEN:
            return
        if tx.state is not TxState.INSIDE_NON_ABORT or tx.token_requested or tx.holds_token:
            return
        tx.token_requested = True
        self.token.requested = True
        self.stats.token_requests += 1
        self._request_token()

    # --- memory accesses ----------------------------------------------------
    def _access(self, addr: int, kind: str, value, callback) -> None:
        tx = self.tx
        line = self.l1.line_of(addr)
        transactional = tx.running and kind != _LD
        if transactional:
            was = self.detector.flagged
            if self.detector.note(self.tshrs, line) and not was:
                self._on_flagged()
        if kind in (_ST, _SC):
            exclusive = not transactional or self.cfg.eager_exclusivity
        else:
            exclusive = False
        attempt = tx.attempt

        def perform(delay):
            self._perform(addr, line, kind, value, callback, delay, attempt)

        if self.l1.acquire(line, exclusive, lambda: perform(0)):
            perform(self.cfg.l1_hit_latency)

    def _perform(self, addr, line, kind, value, callback, delay, attempt) -> None:
        tx = self.tx
        cl = self.l1.lookup(line)
        word = self.l1.word_of(addr)
        in_tx = tx.running and tx.attempt == attempt
        if kind in (_LD, _LL):
            t = self._track(line) if (in_tx and kind == _LL) else (self.find(line) if in_tx else None)
            if t is not None and t.write_set:
                result = t.data[word]
            else:
                result = cl.data[word]
                if kind == _LL and in_tx:
                    tx.reads.append((addr, result))
            self.kernel.schedule(delay, callback, result)
            return
        if not in_tx:
            cl.data[word] = value
            cl.state = LineState.MODIFIED
            if self.sink is not None:
                self.sink.log_plain_store(self.cid, addr, value)
            self.kernel.schedule(delay, callback, None)
            return
        t = self._track(line)
        if t is not None:
            if not t.write_set:
                t.write_set = True
                t.data = list(cl.data)
            t.data[word] = value
        tx.writes[addr] = value
        if kind == _ST:
            self.kernel.schedule(delay, callback, None)
        else:
            tx.sc_callback = callback
            self.kernel.schedule(delay, self._at_sc, attempt)

    # --- store-conditional and exclusivity -----------------------------------
    def _at_sc(self, attempt: int) -> None:
        tx = self.tx
        if tx.attempt != attempt:
            return
        tx.sc_cycle = self.kernel.now
        if tx.state is TxState.INSIDE_ABORT:
            self._finish_abort()
            return
        if self.cfg.check_invariants:
            self.check_inclusive()
        lines = sorted(self.write_lines())
        if self.fp is FpMechanism.SORTED and self.detector.flagged:
            tx.state = TxState.EXCL_ACQ_STEP
            tx.seq = SeqAcqState(lines, stall_budget=self.cfg.seq_stall_bound)
            self.stats.seq_rounds += 1
            self._seq_step()
            return
        tx.state = TxState.EXCL_ACQ
        for ln in lines:
            if not self.l1.state_of(ln).writable:
                self.l1.acquire(ln, True, lambda: self._on_excl_grant(attempt))
        self._try_commit()

    def _on_excl_grant(self, attempt: int) -> None:
        if self.tx.attempt == attempt and self.tx.state is TxState.EXCL_ACQ:
            self._try_commit()

    def _try_commit(self) -> None:
        if all(self.l1.state_of(ln).writable for ln in self.write_lines()):
            self._start_commit()

    def _seq_step(self) -> None:
        """Request the next write-set line in ascending order, one at a time."""
        tx = self.tx
        seq = tx.seq
        while not seq.done and self.l1.state_of(seq.current).writable:
            seq.granted.append(seq.current)
            seq.next_index += 1
        if seq.done:
            self._start_commit()
            return
        attempt = tx.attempt
        if self.l1.acquire(seq.current, True, lambda: self._on_seq_grant(attempt)):
            self._seq_step()

    def _on_seq_grant(self, attempt: int) -> None:
        if self.tx.attempt == attempt and self.tx.state is TxState.EXCL_ACQ_STEP:
            self._seq_step()

    # --- commit / abort -----------------------------------------------------
    def _start_commit(self) -> None:
        tx = self.tx
        tx.state = TxState.COMMIT
        self._commit_start = self.kernel.now
        w = len(self.write_lines())
        self.kernel.schedule(w * self.cfg.commit_write_latency, self._finish_commit, tx.attempt)

    def _finish_commit(self, attempt: int) -> None:
        tx = self.tx
        assert tx.attempt == attempt and tx.state is TxState.COMMIT
        for t in self.tshrs:
            if t.valid and t.write_set:
                cl = self.l1.lookup(t.tag)
                assert cl is not None and cl.state.writable, "write-set line lost before commit"
                cl.data = list(t.data)
                cl.state = LineState.MODIFIED
        entry = TxLogEntry(self.cid, self.kernel.now, 0,
                           read_set=sorted(self.read_lines() + self.write_lines()),
                           reads=list(tx.reads), writes=list(tx.writes.items()))
        if self.sink is not None:
            self.sink.log_commit(entry)
        self.last_commit = entry
        self.stats.commits += 1
        self.streak.on_commit()
        outcome = TxOutcome(True)
        self._end_tx(outcome)
        self.kernel.schedule(0, tx.sc_callback, 0)

    def _doom(self, kind: AbortKind) -> None:
        tx = self.tx
        st = tx.state
        if st is TxState.INSIDE_NON_ABORT:
            tx.state = TxState.INSIDE_ABORT
            tx.abort_cause = AbortCause(kind, pre_sc=True)
            self._leave_privileged()
            # a doomed transaction answers everything right away
            self._release()
        elif st in (TxState.EXCL_ACQ, TxState.EXCL_ACQ_STEP):
            tx.abort_cause = AbortCause(kind, pre_sc=False)
            self._finish_abort()
        elif st is TxState.COMMIT and kind is AbortKind.INTERRUPT:
            tx.interrupt_pending = True

    def _finish_abort(self) -> None:
        tx = self.tx
        tx.state = TxState.ABORT
        cause = tx.abort_cause
        self.stats.aborts[cause.kind] += 1
        if cause.pre_sc:
            self.stats.presc += 1
        self.streak.on_abort()
        self._end_tx(TxOutcome(False, cause))
        self.kernel.schedule(0, tx.sc_callback, 1)

    def _end_tx(self, outcome: TxOutcome) -> None:
        tx = self.tx
        if self.trace_enabled:
            self.records.append(TxRecord(
                tx.start_cycle, self.kernel.now, outcome, len(self.read_lines()),
                len(self.write_lines()), tx.sc_cycle,
                self._commit_start if outcome.committed else None))
        self.outcomes.append(outcome)
        for t in self.tshrs:
            t.left_over = t.valid
            t.valid = False
            t.write_set = False
            t.data = None
        self._leave_privileged()
        self.token.requested = False
        tx.state = TxState.OUTSIDE
        self._release()

    def _release(self) -> None:
        now = self.kernel.now
        for msg in self.l1.stall_queue:
            self.stats.max_stall = max(self.stats.max_stall, now - msg.stalled_at)
        self.l1.release_stalled()

    # --- coherence hook -----------------------------------------------------
    def on_incoming_request(self, line: int, kind: MsgKind) -> Decision:
        """Pure decision for an Invalidate/Downgrade reaching this L1."""
        tx = self.tx
        st = tx.state
        if st in (TxState.OUTSIDE, TxState.INSIDE_ABORT, TxState.ABORT):
            return Decision.RESPOND
        is_token = self.fp is FpMechanism.TOKEN and line == self.token.token_line
        t = self.find(line)
        if st is TxState.COMMIT:
            if t is not None or (is_token and tx.holds_token):
                return Decision.STALL
            return Decision.RESPOND
        exclusive = self.l1.state_of(line).writable
        if tx.holds_token:
            if is_token:
                return Decision.STALL
            if t is None:
                return Decision.RESPOND
            if kind is MsgKind.INVALIDATE:
                return Decision.STALL if exclusive else Decision.NACK
            return Decision.STALL if (t.write_set and exclusive) else Decision.RESPOND
        if t is None:
            return Decision.RESPOND
        if st is TxState.EXCL_ACQ_STEP:
            # only lines already granted in this ordered round may hold others off;
            # an exclusive copy left from earlier does not count yet
            granted = t.write_set and exclusive and line in tx.seq.granted
            if granted:
                return Decision.STALL_TIMED
            if kind is MsgKind.INVALIDATE:
                return Decision.RESPOND_AND_ABORT
            return Decision.RESPOND
        if kind is MsgKind.INVALIDATE:
            return Decision.RESPOND_AND_ABORT
        # before the store-conditional a write-set line counts as not yet
        # acquired, even if it is still exclusive from an earlier commit
        acquired = st is not TxState.INSIDE_NON_ABORT or self.cfg.eager_exclusivity
        if t.write_set and exclusive and acquired:
            return Decision.RESPOND_AND_ABORT
        return Decision.RESPOND

    def on_incoming(self, msg: CoherenceMsg) -> Decision:
        decision = self.on_incoming_request(msg.line, msg.kind)
        if decision in (Decision.STALL, Decision.STALL_TIMED, Decision.NACK):
            self.stats.stalled_msgs += 1
            msg.stalled_at = self.kernel.now
            if decision is Decision.NACK:
                self.stats.nacks_sent += 1
            elif decision is Decision.STALL_TIMED:
                self.kernel.schedule(self.cfg.seq_stall_bound, self._stall_expired,
                                     msg, self.tx.attempt)
        return decision

    def _stall_expired(self, msg: CoherenceMsg, attempt: int) -> None:
        tx = self.tx
        if tx.attempt != attempt or tx.state is not TxState.EXCL_ACQ_STEP:
            return
        if msg in self.l1.stall_queue:
            self._doom(_cause_for(msg.kind))

    def on_conflict(self, msg: CoherenceMsg) -> None:
        self._doom(_cause_for(msg.kind))

    def is_protected(self, line: int) -> bool:
        st = self.tx.state
        if st in (TxState.OUTSIDE, TxState.INSIDE_ABORT, TxState.ABORT):
            return False
        if self.tx.holds_token and line == self.token.token_line:
            return True
        t = self.find(line)
        if t is None:
            return False
        return t.write_set or st is not TxState.COMMIT

    def on_capacity_conflict(self) -> None:
        if self.tx.state in (TxState.INSIDE_NON_ABORT, TxState.EXCL_ACQ, TxState.EXCL_ACQ_STEP):
            self._doom(AbortKind.CAPACITY)

    # --- invariants -----------------------------------------------------------
    def check_inclusive(self) -> None:
        """Every line tracked by a live transaction must be resident in L1."""
        if self.tx.state is TxState.INSIDE_ABORT:
            return
        for t in self.tshrs:
            if t.valid:
                assert self.l1.lookup(t.tag) is not None, \
                    f"core {self.cid}: tracked line {t.tag:#x} not in L1"


def _cause_for(kind: MsgKind) -> AbortKind:
    return AbortKind.INVALIDATE_HIT if kind is MsgKind.INVALIDATE else AbortKind.DOWNGRADE_HIT
