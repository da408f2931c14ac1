"""Sorted doubly linked list: every thread inserts its keys, then deletes them.

Each node field lives on its own line. The key and the deleted flag are stored
in the node itself rather than behind a pointer.
"""

from __future__ import annotations

from ..oracle import ListLayout, Verdict, check_list_state, list_keys
from ..system import Backoff, Ld, LdLinked, St, StCond
from .counters import split_evenly
from .layout import DATA, FLAG, LIST_HEAD, LIST_NODE_SIZE, NEXT, PREV, Workload, node_addr

KEY_BASE = 1000


def list_key(thread: int, i: int, n: int) -> int:
    return KEY_BASE + thread + i * n


def search(key: int):
    """Optimistic traversal with plain loads; returns (prev, candidate)."""
    prev = 0
    node = yield Ld(LIST_HEAD)
    while node and (yield Ld(node + DATA)) < key:
        prev = node
        node = yield Ld(node + NEXT)
    return prev, node


def abandon(th):
    """Validation failed: close the transaction harmlessly."""
    yield StCond(th.scratch, 1)
    return None


def insert_tx(th, node: int, key: int):
    """One attempt. Returns the SC result, or None if validation failed."""
    a, b = yield from search(key)
    if a == 0 and b == 0:
        head = yield LdLinked(LIST_HEAD)
        if head != 0:
            return (yield from abandon(th))
        return (yield StCond(LIST_HEAD, node))
    if a == 0:
        head = yield LdLinked(LIST_HEAD)
        if head == 0:
            return (yield from abandon(th))
        flag = yield LdLinked(head + FLAG)
        if (yield Ld(head + DATA)) < key or flag:
            return (yield from abandon(th))
        yield St(head + PREV, node)
        yield St(node + NEXT, head)
        return (yield StCond(LIST_HEAD, node))
    if b == 0:
        a_next = yield LdLinked(a + NEXT)
        a_flag = yield LdLinked(a + FLAG)
        if a_next or a_flag:
            return (yield from abandon(th))
        yield St(node + PREV, a)
        return (yield StCond(a + NEXT, node))
    if (yield LdLinked(a + NEXT)) != b:
        return (yield from abandon(th))
    if (yield LdLinked(a + FLAG)):
        return (yield from abandon(th))
    if (yield LdLinked(b + FLAG)):
        return (yield from abandon(th))
    yield St(node + NEXT, b)
    yield St(b + PREV, node)
    yield St(node + PREV, a)
    return (yield StCond(a + NEXT, node))


def delete_tx(th, key: int):
    """One attempt. Returns the SC result, or None on validation failure or a miss."""
    prev, node = yield from search(key)
    if node == 0 or (yield Ld(node + DATA)) != key:
        return None
    if prev == 0:
        head = yield LdLinked(LIST_HEAD)
        if head == 0 or (yield Ld(head + DATA)) != key:
            return (yield from abandon(th))
        if (yield LdLinked(head + FLAG)):
            return (yield from abandon(th))
        nxt = yield LdLinked(head + NEXT)
        if nxt:
            if (yield LdLinked(nxt + FLAG)):
                return (yield from abandon(th))
            yield St(nxt + PREV, 0)
        yield St(LIST_HEAD, nxt)
        return (yield StCond(head + FLAG, 1))
    if (yield LdLinked(node + FLAG)):
        return (yield from abandon(th))
    nxt = yield LdLinked(node + NEXT)
    before = yield LdLinked(node + PREV)
    if before == 0:
        return (yield from abandon(th))
    if (yield LdLinked(before + FLAG)):
        return (yield from abandon(th))
    if nxt:
        if (yield LdLinked(nxt + FLAG)):
            return (yield from abandon(th))
        yield St(nxt + PREV, before)
    yield St(before + NEXT, nxt)
    return (yield StCond(node + FLAG, 1))


def dlist_program(keys: list, nodes: list):
    def program(th):
        for node, key in zip(nodes, keys):
            while True:
                r = yield from insert_tx(th, node, key)
                if r == 0:
                    break
                if r is None:
                    th.app_failure()
                yield Backoff(2, 5)
            th.success()
        for key in keys:
            while True:
                r = yield from delete_tx(th, key)
                if r == 0:
                    break
                if r is None:
                    th.app_failure()
                yield Backoff(2, 5)
            th.success()

    return program


def build_dlist(n: int, total_ops: int = 1 << 10) -> Workload:
    """total_ops/2 inserts then as many deletes, keys interleaved across threads."""
    if n < 2:
        raise ValueError("list workload needs at least two threads")
    programs, initial, arena = [], {}, []
    for t, count in enumerate(split_evenly(total_ops // 2, n)):
        keys = [list_key(t, i, n) for i in range(count)]
        nodes = [node_addr(t, i, LIST_NODE_SIZE) for i in range(count)]
        for node, key in zip(nodes, keys):
            initial[node + DATA] = key
        arena += nodes
        programs.append(dlist_program(keys, nodes))
    layout = ListLayout(DATA, NEXT, PREV, FLAG)

    def check(system):
        read = system.read_memory
        left = list_keys(read, LIST_HEAD, layout, limit=len(arena) + 1)
        return {"list": check_list_state(read, LIST_HEAD, arena, layout),
                "list_empty": Verdict(not left, [f"{len(left)} keys left"] if left else [])}

    return Workload("dlist", programs, initial, check, dict(threads=n, ops=total_ops))
