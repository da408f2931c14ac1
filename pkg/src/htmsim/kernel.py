"""Deterministic discrete-event kernel.

Events are ordered by (due cycle, insertion sequence), so two events due in
the same cycle always fire in the order they were scheduled.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable


class CycleLimitExceeded(RuntimeError):
    """Raised when a run is still live at its cycle limit (likely livelock)."""

    def __init__(self, limit: int, detail: str = ""):
        self.limit = limit
        self.detail = detail
        msg = f"cycle limit {limit} exceeded"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(order=True)
class Event:
    due_cycle: int
    seq: int
    callback: Callable = field(compare=False)
    args: tuple = field(default=(), compare=False)
    target: Any = field(default=None, compare=False)
    cancelled: bool = field(default=False, compare=False)

    def cancel(self) -> None:
        self.cancelled = True


class Rng:
    """Seeded generator; identical seeds give identical draw sequences."""

    def __init__(self, seed: int):
        self.seed = seed & 0xFFFF_FFFF_FFFF_FFFF
        self._gen = random.Random(self.seed)

    def range(self, lo: int, hi: int) -> int:
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return self._gen.randint(lo, hi)


class Kernel:
    def __init__(self, seed: int = 0):
        self.now = 0
        self._queue: list[Event] = []
        self._seq = 0
        self.rng = Rng(seed)
        self.events_processed = 0

    def schedule(self, delay: int, callback: Callable, *args, target: Any = None) -> Event:
        if delay < 0:
            raise ValueError("delay must be non-negative")
        ev = Event(self.now + delay, self._seq, callback, args, target)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def rng_range(self, lo: int, hi: int) -> int:
        return self.rng.range(lo, hi)

    def pending(self) -> int:
        return sum(1 for ev in self._queue if not ev.cancelled)

    def step(self) -> bool:
        """Fire the next live event; False when the queue is empty."""
        queue = self._queue
        while queue:
            ev = heapq.heappop(queue)
            if ev.cancelled:
                continue
            assert ev.due_cycle >= self.now, "time went backwards"
            self.now = ev.due_cycle
            self.events_processed += 1
            ev.callback(*ev.args)
            return True
        return False

    def run(self, until: int, done: Callable[[], bool] | None = None) -> int:
        """Process events until ``done()`` holds or the queue drains.

        Raises CycleLimitExceeded if work remains past cycle ``until``.
        """
        done = done or (lambda: False)
        queue = self._queue
        while not done():
            while queue and queue[0].cancelled:
                heapq.heappop(queue)
            if not queue:
                break
            if queue[0].due_cycle > until:
                self.now = until
                raise CycleLimitExceeded(until)
            self.step()
        return self.now
