"""Shared-counter benchmark: each success increments all k counters at once."""

from __future__ import annotations

import enum

from ..oracle import Verdict
from ..system import Backoff, ExpBackoff, LdLinked, Ld, Nop, St, StCond
from .layout import LOCK_ADDR, Workload, counter_addr
from .locks import EXP_BACKOFF_MAX, EXP_BACKOFF_MIN, tts_acquire, tts_release


class Duration(enum.Enum):
    SHORT = "short"
    LONG = "long"


class Sync(enum.Enum):
    HTM = "htm"
    HTM_BACKOFF = "htm-backoff"
    TTS = "tts"
    TTS_BACKOFF = "tts-backoff"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower().replace("_", "-"))


LONG_NOPS_PER_COUNTER = 10


def split_evenly(total: int, n: int) -> list:
    base, extra = divmod(total, n)
    return [base + (1 if i < extra else 0) for i in range(n)]


def htm_counter_program(addrs, successes, long_body, exp_backoff):
    k = len(addrs)

    def program(th):
        done = failures = 0
        while done < successes:
            vals = []
            for a in addrs:
                vals.append((yield LdLinked(a)))
            if long_body:
                yield Nop(k * LONG_NOPS_PER_COUNTER)
            for a, v in zip(addrs[:-1], vals[:-1]):
                yield Nop(1)
                yield St(a, v + 1)
            yield Nop(1)
            if (yield StCond(addrs[-1], vals[-1] + 1)) == 0:
                done += 1
                failures = 0
                th.success()
                continue
            failures += 1
            if exp_backoff:
                yield ExpBackoff(EXP_BACKOFF_MIN, EXP_BACKOFF_MAX, failures)
            else:
                yield Backoff(2, 5)

    return program


def tts_counter_program(addrs, successes, long_body, exp_backoff):
    k = len(addrs)

    def program(th):
        for _ in range(successes):
            yield from tts_acquire(th, LOCK_ADDR, exp_backoff)
            vals = []
            for a in addrs:
                vals.append((yield Ld(a)))
            if long_body:
                yield Nop(k * LONG_NOPS_PER_COUNTER)
            for a, v in zip(addrs, vals):
                yield Nop(1)
                yield St(a, v + 1)
            yield from tts_release(th, LOCK_ADDR)
            th.success()

    return program


def build_counters(n: int, k: int, duration="short", sync="htm", total: int = 1 << 10,
                   num_tshrs: int = 8, line_size: int = 64) -> Workload:
    """n threads together perform ``total`` atomic increments of k counters."""
    duration = Duration(duration) if not isinstance(duration, Duration) else duration
    sync = Sync.parse(sync)
    if n < 1:
        raise ValueError("need at least one thread")
    if not 1 <= k <= num_tshrs:
        raise ValueError(f"k={k} counters do not fit in {num_tshrs} TSHRs")
    addrs = [counter_addr(i, line_size) for i in range(k)]
    long_body = duration is Duration.LONG
    if sync in (Sync.HTM, Sync.HTM_BACKOFF):
        make = htm_counter_program
    else:
        make = tts_counter_program
    exp_backoff = sync in (Sync.HTM_BACKOFF, Sync.TTS_BACKOFF)
    programs = [make(addrs, share, long_body, exp_backoff) for share in split_evenly(total, n)]

    def check(system):
        finals = [system.read_memory(a) for a in addrs]
        bad = [f"counter {i} = {v}, expected {total}" for i, v in enumerate(finals) if v != total]
        return {"counters": Verdict(not bad, bad)}

    return Workload("counters", programs, {}, check,
                    dict(threads=n, counters=k, duration=duration.value, sync=sync.value,
                         ops=total))
