import itertools

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from htmsim.coherence import Decision, LineState, MsgKind
from htmsim.config import SimConfig
from htmsim.htm import TxContext, TxState, Tshr
from htmsim.kernel import CycleLimitExceeded
from htmsim.progress import AbortStreak, PrivilegeMonitor, RepeatDetector, SeqAcqState
from htmsim.system import LdLinked, Nop, St, StCond, System

A, B = 0x10000, 0x20000


def step_to(system, cycle):
    """Process events up to ``cycle``, leaving later ones queued."""
    try:
        system.kernel.run(cycle)
    except CycleLimitExceeded:
        pass


def test_repeat_detector_counts_left_over_matches():
    tshrs = [Tshr(tag=A, left_over=True), Tshr(tag=B, left_over=True, valid=True)]
    d = RepeatDetector(2)
    assert not d.note(tshrs, B)  # valid entries are not left-overs
    assert not d.note(tshrs, A)
    assert d.note(tshrs, A) and d.flagged
    d.reset()
    assert not d.flagged


def test_abort_streak_saturates_and_resets():
    s = AbortStreak(2)
    for _ in range(5):
        s.on_abort()
    assert s.saturated and s.counter == 3
    s.on_commit()
    assert not s.saturated


def test_privilege_monitor_counts_overlap():
    m = PrivilegeMonitor()
    m.enter(0)
    m.leave(0)
    m.enter(1)
    assert m.violations == 0
    m.enter(2)
    assert m.violations == 1 and m.max_seen == 2


def test_seq_state_walks_sorted_lines():
    s = SeqAcqState([1, 2, 3])
    assert s.current == 1 and not s.done
    s.next_index = 3
    assert s.done


def mutual_abort_program(read_line, write_line, retry=3):
    """Read the other side's write line, bump our own, retry after a fixed pause."""
    def prog(th):
        while True:
            yield LdLinked(read_line)
            v = yield LdLinked(write_line)
            if (yield StCond(write_line, v + 1)) == 0:
                return
            yield Nop(retry)
    return prog


def mutual_abort_system(fp, skew=0, retry=3):
    s = System(SimConfig(num_cores=2, fp_mechanism=fp))
    s.load_program(0, mutual_abort_program(A, B, retry))
    other = mutual_abort_program(B, A, retry)

    def late(th):
        yield Nop(skew + 1)
        yield from other(th)

    s.load_program(1, late)
    return s


@pytest.mark.parametrize("skew,retry", list(itertools.product((0, 1, 2, 4), (1, 3, 8))))
def test_mutual_abort_livelocks_without_progress_mechanism(skew, retry):
    s = mutual_abort_system("none", skew, retry)
    with pytest.raises(CycleLimitExceeded):
        s.run(100_000)
    assert all(e.stats.commits == 0 for e in s.engines)


@pytest.mark.parametrize("skew,retry", list(itertools.product((0, 1, 2, 4), (1, 3, 8))))
def test_mutual_abort_resolved_by_token(skew, retry):
    s = mutual_abort_system("token", skew, retry)
    s.run(100_000)
    assert [e.stats.commits for e in s.engines] == [1, 1]
    assert s.privileged_violations == 0 and s.monitor.max_seen == 1
    assert (s.read_memory(A), s.read_memory(B)) == (1, 1)


def test_token_start_check_grants_privilege_immediately():
    s = System(SimConfig(num_cores=1, fp_mechanism="token"))
    s.l1s[0]._install(s.cfg.token_line, LineState.EXCLUSIVE, [0] * 8)
    eng = s.engines[0]
    eng.load(A, lambda v: None, linked=True)
    assert eng.tx.holds_token and s.monitor.holders == {0}


def test_saturated_streak_requests_token_before_first_access():
    s = System(SimConfig(num_cores=1, fp_mechanism="token"))
    eng = s.engines[0]
    for _ in range(3):
        eng.streak.on_abort()
    got = []
    eng.load(A, got.append, linked=True)
    assert eng.tx.token_requested and eng.stats.proactive_requests == 1
    s.kernel.run(1_000)
    assert eng.tx.holds_token and got == [0]


def test_proactive_wait_gives_up_after_window():
    s = System(SimConfig(num_cores=2, fp_mechanism="token", token_wait_window=32))
    eng = s.engines[0]
    for _ in range(3):
        eng.streak.on_abort()
    # the other cache keeps the token line stalled by holding privilege in commit
    other = s.engines[1]
    s.l1s[1]._install(s.cfg.token_line, LineState.EXCLUSIVE, [0] * 8)
    s.directory.entry(s.cfg.token_line).owner = 1
    other.tx = TxContext(TxState.COMMIT, attempt=1, holds_token=True)
    got = []
    eng.load(A, got.append, linked=True)
    step_to(s, 1 + 32 + 5)
    assert eng.tx.proactive_wait is None and not eng.tx.holds_token
    s.kernel.run(200)
    assert got == [0] and not eng.tx.holds_token


def test_token_holder_stalls_and_nacks():
    s = System(SimConfig(num_cores=1, fp_mechanism="token"))
    eng = s.engines[0]
    eng.tx = TxContext(TxState.INSIDE_NON_ABORT, attempt=1, holds_token=True)
    s.l1s[0]._install(A, LineState.SHARED, [0] * 8)
    s.l1s[0]._install(B, LineState.EXCLUSIVE, [0] * 8)
    eng._track(A)
    tb = eng._track(B)
    tb.write_set, tb.data = True, [0] * 8
    assert eng.on_incoming_request(s.cfg.token_line, MsgKind.DOWNGRADE) is Decision.STALL
    assert eng.on_incoming_request(A, MsgKind.INVALIDATE) is Decision.NACK
    assert eng.on_incoming_request(B, MsgKind.INVALIDATE) is Decision.STALL
    assert eng.on_incoming_request(B, MsgKind.DOWNGRADE) is Decision.STALL
    assert eng.on_incoming_request(A, MsgKind.DOWNGRADE) is Decision.RESPOND


def test_sorted_acquisition_requests_lines_in_ascending_order():
    lines = [0x3500, 0x1500, 0x2500]
    s = System(SimConfig(num_cores=1, fp_mechanism="sorted"), trace=True)
    eng = s.engines[0]

    def prog(th):
        for _ in range(2):  # second pass is a flagged repeat
            yield LdLinked(lines[0])
            for a in lines[1:]:
                yield St(a, 1)
            yield StCond(lines[0], 1)
            for a in lines:  # lose the lines so the repeat must request them again
                s.l1s[0].evict(a)

    s.load_program(0, prog)
    s.run(10_000)
    assert eng.stats.seq_rounds == 1
    getx = [m[2] for m in s.directory.trace if m[1] == "GetX" and m[4] == 0]
    assert getx[-3:] == sorted(lines)


def test_timed_stall_expiry_aborts_the_staller():
    s = System(SimConfig(num_cores=1, fp_mechanism="sorted", seq_stall_bound=64))
    eng = s.engines[0]
    s.l1s[0]._install(A, LineState.EXCLUSIVE, [0] * 8)
    s.l1s[0]._install(B, LineState.SHARED, [0] * 8)
    eng.tx = TxContext(TxState.EXCL_ACQ_STEP, attempt=1, seq=SeqAcqState([A, B]))
    eng.tx.sc_callback = lambda r: None
    for ln in (A, B):
        t = eng._track(ln)
        t.write_set, t.data = True, [0] * 8
    eng.tx.seq.granted.append(A)
    eng.tx.seq.next_index = 1
    assert eng.on_incoming_request(B, MsgKind.INVALIDATE) is Decision.RESPOND_AND_ABORT
    assert eng.on_incoming_request(A, MsgKind.INVALIDATE) is Decision.STALL_TIMED
    from htmsim.coherence import CoherenceMsg
    s.directory.send = lambda m: None
    s.l1s[0].deliver_request(CoherenceMsg(MsgKind.INVALIDATE, A, 1, sender=-1, target=0))
    step_to(s, 63)
    assert eng.tx.state is TxState.EXCL_ACQ_STEP
    step_to(s, 70)
    assert eng.tx.state is TxState.OUTSIDE and eng.stats.aborts_total == 1
    assert s.l1s[0].state_of(A) is LineState.INVALID


# --- ordered acquisition: some flagged contender always gets through ----------

POOL = [0x10000 + i * 64 * 37 for i in range(6)]
ROUND = 5000


def contender(ws, retry, skew, first_result):
    def prog(th):
        # solo warm-up leaves left-over tags on every write-set line
        yield Nop(1 + th.cid * 1000)
        v = yield LdLinked(ws[0])
        for a in ws[1:]:
            yield St(a, 1)
        assert (yield StCond(ws[0], v + 1)) == 0
        yield Nop(ROUND + skew - th.now())
        first = True
        while True:
            v = yield LdLinked(ws[0])
            for a in ws[1:]:
                yield St(a, v + 1)
            if first:
                assert th.core.engine.detector.flagged
            r = yield StCond(ws[0], v + 1)
            if first:
                first_result[th.cid] = r
                first = False
            if r == 0:
                return
            yield Nop(retry)
    return prog


@st.composite
def contention_round(draw):
    n = draw(st.integers(2, 4))
    common = draw(st.sampled_from(POOL))
    others = [p for p in POOL if p != common]
    sets = []
    for _ in range(n):
        rest = draw(st.lists(st.sampled_from(others), min_size=1, max_size=3, unique=True))
        sets.append(list(draw(st.permutations([common] + rest))))
    skews = draw(st.lists(st.integers(0, 6), min_size=n, max_size=n))
    return sets, skews, draw(st.integers(1, 8))


@settings(max_examples=200, deadline=None, suppress_health_check=list(HealthCheck))
@given(contention_round())
def test_sorted_round_of_flagged_contenders_commits_one(case):
    sets, skews, retry = case
    n = len(sets)
    s = System(SimConfig(num_cores=n, fp_mechanism="sorted"))
    first = {}
    for cid in range(n):
        s.load_program(cid, contender(sets[cid], retry, skews[cid], first))
    s.run(200_000)
    assert 0 in first.values()
    assert all(e.stats.commits == 2 for e in s.engines)
