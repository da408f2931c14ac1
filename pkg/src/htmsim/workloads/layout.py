"""Fixed address map shared by the guest programs and their checkers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

COUNTER_BASE = 0x0010_0000
LOCK_ADDR = 0x0020_0000
QUEUE_HEAD = 0x0030_0000
QUEUE_TAIL = 0x0030_1000
LIST_HEAD = 0x0040_0000
ARENA_BASE = 0x0100_0000
ARENA_SPAN = 0x0040_0000  # per-thread node arena

# node field offsets; every field sits on its own 64-byte line
DATA, NEXT, PREV, FLAG = 0, 64, 128, 192
QUEUE_NODE_SIZE = 128
LIST_NODE_SIZE = 256


def counter_addr(i: int, line_size: int = 64) -> int:
    return COUNTER_BASE + i * max(line_size, 64)


def node_addr(thread: int, index: int, size: int) -> int:
    addr = ARENA_BASE + thread * ARENA_SPAN + index * size
    if index * size >= ARENA_SPAN:
        raise ValueError("node arena exhausted")
    return addr


@dataclass
class Workload:
    """Guest programs plus the memory image they start from."""

    name: str
    programs: list
    initial: dict = field(default_factory=dict)
    check: Callable = None  # (system) -> dict of name -> Verdict
    params: dict = field(default_factory=dict)

    def install(self, system) -> None:
        for addr, value in sorted(self.initial.items()):
            system.write_memory(addr, value)
        for cid, prog in enumerate(self.programs):
            system.load_program(cid, prog)
