from hypothesis import given, strategies as st

from htmsim.oracle import (ListLayout, QueueEvent, TxLogEntry, check_list_state,
                           check_queue_history, list_keys, replay_serial)

from conftest import run_programs
from htmsim.system import LdLinked, StCond


def entry(cycle, seq, reads=(), writes=(), core=0):
    return TxLogEntry(core, cycle, seq, reads=list(reads), writes=list(writes))


def counter_log(n):
    """n increments of word 0x100, each reading the previous value."""
    return [entry(10 * i, i, reads=[(0x100, i)], writes=[(0x100, i + 1)]) for i in range(n)]


def test_replay_accepts_serial_history():
    log = counter_log(5)
    assert replay_serial(log, {}, {0x100: 5}).matches


def test_replay_sorts_by_commit_cycle():
    log = counter_log(5)[::-1]
    assert replay_serial(log, {}, {0x100: 5})


def test_replay_catches_lost_update():
    log = counter_log(5)
    del log[2]  # negative control: drop one committed write
    res = replay_serial(log, {}, {0x100: 5})
    assert not res.matches
    assert res.first_divergence == (0x100, 2, 3)


def test_replay_catches_final_image_mismatch():
    res = replay_serial(counter_log(3), {}, {0x100: 4})
    assert not res and res.reason == "final memory"


def test_replay_skips_uncommitted_entries():
    log = counter_log(2) + [TxLogEntry(1, 50, 9, writes=[(0x100, 77)], committed=False)]
    assert replay_serial(log, {}, {0x100: 2})


def test_replay_of_simulated_run():
    def bump(th):
        for _ in range(20):
            while True:
                v = yield LdLinked(0x1000)
                if (yield StCond(0x1000, v + 1)) == 0:
                    break

    s = run_programs([bump, bump], fp_mechanism="token")
    assert s.read_memory(0x1000) == 40
    assert replay_serial(s.log, s.initial, s.architectural_memory())
    assert sum(not e.plain for e in s.log) == 40


def enq(v, p, c):
    return QueueEvent("enq", v, p, c)


def deq(v, p, c):
    return QueueEvent("deq", v, p, c)


def test_queue_history_ok():
    ev = [enq(1, 0, 1), enq(11, 1, 2), enq(2, 0, 3), deq(1, 0, 4), deq(11, 1, 5)]
    assert check_queue_history(ev, residual=[2])


def test_queue_history_swapped_pair_is_caught():
    ev = [enq(1, 0, 1), enq(2, 0, 2), deq(2, 0, 3), deq(1, 0, 4)]
    v = check_queue_history(ev, residual=[])
    assert not v and "out of order" in v.problems[0]


def test_queue_history_loss_and_duplication():
    assert not check_queue_history([enq(1, 0, 1), deq(1, 0, 2), deq(1, 0, 3)])
    assert not check_queue_history([deq(5, 0, 1)])
    assert not check_queue_history([enq(1, 0, 1), enq(2, 0, 2)], residual=[1])


@given(st.lists(st.integers(0, 3), max_size=40), st.integers(0, 40))
def test_queue_history_accepts_any_fifo_run(producers, ndeq):
    fifo, events, counts = [], [], [0] * 4
    for i, p in enumerate(producers):
        counts[p] += 1
        v = (p + 1) * 1000 + counts[p]
        fifo.append((v, p))
        events.append(enq(v, p, i))
    for j in range(min(ndeq, len(fifo))):
        v, p = fifo.pop(0)
        events.append(deq(v, p, 100 + j))
    assert check_queue_history(events, residual=[v for v, _ in fifo])


LAY = ListLayout()
HEAD = 0x50


def build_list(keys, base=0x1000, stride=0x400):
    mem, nodes, prev = {}, [], 0
    for i, k in enumerate(keys):
        n = base + i * stride
        nodes.append(n)
        mem[n + LAY.data] = k
        mem[n + LAY.prev] = prev
        if prev:
            mem[prev + LAY.next] = n
        else:
            mem[HEAD] = n
        prev = n
    return mem, nodes


def test_list_state_ok_and_keys():
    mem, nodes = build_list([3, 5, 9])
    assert check_list_state(mem, HEAD, nodes)
    assert list_keys(lambda a: mem.get(a, 0), HEAD) == [3, 5, 9]


def test_empty_list_is_fine():
    assert check_list_state({}, HEAD)


def test_flagged_node_reachable_is_caught():
    mem, nodes = build_list([3, 5, 9])
    mem[nodes[1] + LAY.flag] = 1
    v = check_list_state(mem, HEAD, nodes)
    assert not v and "still reachable" in v.problems[0]


def test_broken_prev_link_and_order():
    mem, nodes = build_list([3, 5, 9])
    mem[nodes[2] + LAY.prev] = nodes[0]
    assert not check_list_state(mem, HEAD, nodes)
    mem, nodes = build_list([3, 9, 5])
    assert not check_list_state(mem, HEAD, nodes)


def test_cycle_detected():
    mem, nodes = build_list([1, 2])
    mem[nodes[1] + LAY.next] = nodes[0]
    assert not check_list_state(mem, HEAD, nodes)
