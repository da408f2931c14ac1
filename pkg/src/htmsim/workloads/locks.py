"""Test-and-test-and-set spin lock built from plain loads and a one-line LL/SC."""

from __future__ import annotations

from ..system import ExpBackoff, Ld, LdLinked, St, StCond

EXP_BACKOFF_MIN = 2
EXP_BACKOFF_MAX = 256


def tts_acquire(th, lock: int, backoff: bool = False):
    """Spin until the lock reads free, then try to swap it from 0 to 1."""
    failures = 0
    while True:
        while (yield Ld(lock)) != 0:
            pass
        seen = yield LdLinked(lock)
        if seen == 0:
            if (yield StCond(lock, 1)) == 0:
                return failures
        else:
            # someone got there first: close the transaction on a private line
            yield StCond(th.scratch, 1)
        failures += 1
        if backoff:
            yield ExpBackoff(EXP_BACKOFF_MIN, EXP_BACKOFF_MAX, failures)


def tts_release(th, lock: int):
    yield St(lock, 0)
