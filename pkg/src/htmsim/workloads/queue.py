"""Linked FIFO queue: half the threads enqueue, the other half dequeue."""

from __future__ import annotations

from ..oracle import QueueEvent, Verdict, check_queue_history
from ..system import Backoff, ExpBackoff, Ld, LdLinked, St, StCond
from .counters import split_evenly
from .locks import EXP_BACKOFF_MAX, EXP_BACKOFF_MIN
from .layout import DATA, NEXT, QUEUE_HEAD, QUEUE_NODE_SIZE, QUEUE_TAIL, Workload, node_addr

VALUE_STRIDE = 1_000_000


def queue_value(producer: int, i: int) -> int:
    return (producer + 1) * VALUE_STRIDE + i + 1


def producer_of(value: int) -> int:
    return value // VALUE_STRIDE - 1


def enqueue(th, node: int):
    """One transaction; returns the store-conditional result."""
    tail = yield LdLinked(QUEUE_TAIL)
    if tail == 0:
        yield St(QUEUE_HEAD, node)
    else:
        yield St(tail + NEXT, node)
    return (yield StCond(QUEUE_TAIL, node))


def dequeue(th):
    """One transaction; returns (sc result, value) with value None on an empty queue."""
    head = yield LdLinked(QUEUE_HEAD)
    if head == 0:
        return (yield StCond(th.scratch, 1)), None
    # node data never changes once published, so a plain load is enough
    value = yield Ld(head + DATA)
    nxt = yield LdLinked(head + NEXT)
    if nxt == 0:
        yield St(QUEUE_TAIL, 0)
        return (yield StCond(QUEUE_HEAD, 0)), value
    return (yield StCond(QUEUE_HEAD, nxt)), value


def producer_program(producer: int, count: int):
    def program(th):
        for i in range(count):
            node = node_addr(th.cid, i, QUEUE_NODE_SIZE)
            while (yield from enqueue(th, node)) != 0:
                yield Backoff(2, 5)
            cycle, seq = th.last_commit()
            th.note(QueueEvent("enq", queue_value(producer, i), producer, cycle, seq))
            th.success()

    return program


def consumer_program(count: int):
    def program(th):
        done = empty = 0
        while done < count:
            failed, value = yield from dequeue(th)
            if failed:
                yield Backoff(2, 5)
                continue
            if value is None:
                # polling an empty queue keeps stealing the head line from producers
                th.app_failure()
                empty += 1
                yield ExpBackoff(EXP_BACKOFF_MIN, EXP_BACKOFF_MAX, empty)
                continue
            empty = 0
            cycle, seq = th.last_commit()
            th.note(QueueEvent("deq", value, producer_of(value), cycle, seq))
            th.success()
            done += 1

    return program


def queue_contents(read, limit: int = 1 << 20) -> list:
    out = []
    node = read(QUEUE_HEAD)
    while node and len(out) < limit:
        out.append(read(node + DATA))
        node = read(node + NEXT)
    return out


def build_queue(n: int, total_ops: int = 1 << 10) -> Workload:
    """First n/2 threads produce, the rest consume; total_ops split evenly between the roles."""
    if n < 2 or n % 2:
        raise ValueError("queue workload needs an even thread count")
    half = n // 2
    enq = split_evenly(total_ops // 2, half)
    deq = split_evenly(total_ops // 2, half)
    programs, initial = [], {}
    for p in range(half):
        for i in range(enq[p]):
            initial[node_addr(p, i, QUEUE_NODE_SIZE) + DATA] = queue_value(p, i)
        programs.append(producer_program(p, enq[p]))
    programs += [consumer_program(c) for c in deq]

    def check(system):
        events = [ev for core in system.cores for ev in core.thread.notes]
        residual = queue_contents(system.read_memory, limit=total_ops + 1)
        return {"queue": check_queue_history(events, residual),
                "queue_empty": Verdict(not residual,
                                       [f"{len(residual)} items left"] if residual else [])}

    return Workload("queue", programs, initial, check, dict(threads=n, ops=total_ops))
