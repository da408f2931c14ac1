"""Forward-progress state: repeated-attempt detection, token priority and
sorted one-line-at-a-time exclusivity acquisition.

The classes here only hold per-core state. The HTM engine drives them.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class RepeatDetector:
    """Counts accesses whose line matches a left-over TSHR tag."""

    def __init__(self, threshold: int):
        self.threshold = threshold
        self.leftover_match_count = 0

    @property
    def flagged(self) -> bool:
        return self.leftover_match_count >= self.threshold

    def reset(self) -> None:
        self.leftover_match_count = 0

    def note(self, tshrs, line: int) -> bool:
        """Compare ``line`` against left-over entries and return the flag."""
        for t in tshrs:
            if t.left_over and not t.valid and t.tag == line:
                self.leftover_match_count += 1
                break
        return self.flagged


class AbortStreak:
    """Saturating count of consecutive aborts on one core."""

    def __init__(self, bits: int):
        self.limit = (1 << bits) - 1
        self.counter = 0

    @property
    def saturated(self) -> bool:
        return self.counter >= self.limit

    def on_abort(self) -> None:
        if self.counter < self.limit:
            self.counter += 1

    def on_commit(self) -> None:
        self.counter = 0


@dataclass
class TokenState:
    token_line: int
    requested: bool = False
    held: bool = False  # privileged: token line exclusive and tx still clean


@dataclass
class SeqAcqState:
    sorted_lines: list
    next_index: int = 0
    stall_budget: int = 64
    granted: list = field(default_factory=list)

    @property
    def done(self) -> bool:
        return self.next_index >= len(self.sorted_lines)

    @property
    def current(self) -> int:
        return self.sorted_lines[self.next_index]


class PrivilegeMonitor:
    """System-wide record of which caches are token-privileged."""

    def __init__(self):
        self.holders: set = set()
        self.max_seen = 0
        self.violations = 0

    def enter(self, cid: int) -> None:
        self.holders.add(cid)
        if len(self.holders) > 1:
            self.violations += 1
        self.max_seen = max(self.max_seen, len(self.holders))

    def leave(self, cid: int) -> None:
        self.holders.discard(cid)
