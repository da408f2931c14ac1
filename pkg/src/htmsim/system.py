"""Cores, guest programs and the assembled multicore system.

A guest program is a generator. It yields memory operations and receives each
operation's result back from ``yield``: the loaded word for ``Ld`` and
``LdLinked``, 0/1 for ``StCond``, and None for everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .coherence import Directory, L1Cache
from .config import SimConfig
from .htm import HtmEngine
from .kernel import CycleLimitExceeded, Kernel
from .oracle import TxLogEntry
from .progress import PrivilegeMonitor


@dataclass(frozen=True)
class Ld:
    addr: int


@dataclass(frozen=True)
class LdLinked:
    addr: int


@dataclass(frozen=True)
class St:
    addr: int
    value: int


@dataclass(frozen=True)
class StCond:
    addr: int
    value: int


@dataclass(frozen=True)
class Nop:
    count: int = 1


@dataclass(frozen=True)
class Backoff:
    """Idle for a uniform random number of cycles in [lo, hi]."""

    lo: int
    hi: int


@dataclass(frozen=True)
class ExpBackoff:
    """Idle for a random wait whose upper bound doubles with ``attempt``."""

    lo: int
    hi: int
    attempt: int

    def window(self) -> tuple:
        upper = min(self.hi, self.lo << min(self.attempt, 30))
        return self.lo, max(self.lo, upper)


@dataclass(frozen=True)
class Done:
    pass


MemOp = Ld | LdLinked | St | StCond | Nop | Backoff | ExpBackoff | Done
Program = Callable[["Thread"], Iterator]


class Thread:
    """What a guest program can see about the core running it."""

    def __init__(self, core: "Core", scratch: int):
        self.core = core
        self.cid = core.cid
        self.scratch = scratch  # private line for dummy store-conditionals
        self.app_failures = 0
        self.successes = 0
        self.notes: list = []

    def now(self) -> int:
        return self.core.kernel.now

    def last_commit(self) -> tuple:
        """(cycle, log position) of this core's latest committed transaction."""
        e = self.core.engine.last_commit
        return (e.commit_cycle, e.seq) if e is not None else (0, -1)

    def app_failure(self) -> None:
        self.app_failures += 1

    def success(self) -> None:
        self.successes += 1

    def note(self, item) -> None:
        self.notes.append(item)


class Core:
    """In-order, single-issue core driving one guest program."""

    def __init__(self, cid: int, kernel: Kernel, engine: HtmEngine, scratch: int):
        self.cid = cid
        self.kernel = kernel
        self.engine = engine
        self.thread = Thread(self, scratch)
        self._gen: Optional[Iterator] = None
        self.done = True
        self.finish_cycle = 0
        self.ops = 0

    def load(self, program: Program) -> None:
        self._gen = program(self.thread)
        self.done = False

    def start(self) -> None:
        if not self.done:
            self.kernel.schedule(0, self._advance, None)

    def _advance(self, result) -> None:
        try:
            op = self._gen.send(result)
        except StopIteration:
            op = Done()
        self.ops += 1
        self._issue(op)

    def _issue(self, op) -> None:
        eng = self.engine
        k = self.kernel
        cls = type(op)
        if cls is Ld:
            eng.load(op.addr, self._advance)
        elif cls is LdLinked:
            eng.load(op.addr, self._advance, linked=True)
        elif cls is St:
            eng.store(op.addr, op.value, self._advance)
        elif cls is StCond:
            eng.store_conditional(op.addr, op.value, self._advance)
        elif cls is Nop:
            k.schedule(op.count, self._advance, None)
        elif cls is Backoff:
            k.schedule(k.rng_range(op.lo, op.hi), self._advance, None)
        elif cls is ExpBackoff:
            lo, hi = op.window()
            k.schedule(k.rng_range(lo, hi), self._advance, None)
        elif cls is Done:
            self.done = True
            self.finish_cycle = k.now
            self._gen = None
        else:
            raise TypeError(f"not a memory operation: {op!r}")


class System:
    """Cores, private L1s with HTM engines, and the shared L2/directory."""

    SCRATCH_BASE = 0x7F00_0000

    def __init__(self, cfg: SimConfig = SimConfig(), trace: bool = False):
        self.cfg = cfg
        self.kernel = Kernel(cfg.seed)
        self.directory = Directory(cfg, self.kernel, trace=trace)
        self.monitor = PrivilegeMonitor()
        self.log: list[TxLogEntry] = []
        self.initial: dict = {}
        self._seq = 0
        self.l1s = []
        self.engines = []
        self.cores = []
        for cid in range(cfg.num_cores):
            l1 = L1Cache(cid, cfg, self.kernel, self.directory)
            eng = HtmEngine(cid, cfg, self.kernel, l1, self.monitor, sink=self, trace=trace)
            self.l1s.append(l1)
            self.engines.append(eng)
            self.cores.append(Core(cid, self.kernel, eng, self.scratch_line(cid)))
        self.directory.caches = self.l1s

    def scratch_line(self, cid: int) -> int:
        return self.SCRATCH_BASE + cid * self.cfg.line_size * 4

    # --- memory image -------------------------------------------------------
    def write_memory(self, addr: int, value: int) -> None:
        """Set an initial word directly in L2 before the run starts."""
        line = addr - addr % self.cfg.line_size
        self.directory.l2_line(line)[(addr % self.cfg.line_size) // 8] = value
        self.initial[addr] = value

    def read_memory(self, addr: int) -> int:
        """Architectural value: the E/M holder's copy if any, else L2."""
        size = self.cfg.line_size
        line = addr - addr % size
        word = (addr % size) // 8
        for l1 in self.l1s:
            cl = l1.lookup(line)
            if cl is not None and cl.state.writable:
                return cl.data[word]
        data = self.directory.l2.get(line)
        return data[word] if data is not None else 0

    def architectural_memory(self) -> dict:
        lines = set(self.directory.l2)
        for l1 in self.l1s:
            for s in l1.sets:
                lines.update(ln for ln, cl in s.items() if cl.state.writable)
        out = {}
        for line in lines:
            for w in range(self.cfg.words_per_line):
                addr = line + 8 * w
                v = self.read_memory(addr)
                if v:
                    out[addr] = v
        return out

    # --- log sink -------------------------------------------------------------
    def log_commit(self, entry: TxLogEntry) -> None:
        entry.seq = self._seq
        self._seq += 1
        self.log.append(entry)

    def log_plain_store(self, cid: int, addr: int, value: int) -> None:
        self.log_commit(TxLogEntry(cid, self.kernel.now, 0, writes=[(addr, value)], plain=True))

    # --- running ----------------------------------------------------------------
    def load_program(self, cid: int, program: Program) -> None:
        self.cores[cid].load(program)

    def interrupt(self, cid: int, at: int) -> None:
        self.kernel.schedule(max(0, at - self.kernel.now), self.engines[cid].interrupt)

    def all_done(self) -> bool:
        return all(c.done for c in self.cores)

    def run(self, until: int = 10_000_000) -> int:
        """Run until every core finishes; returns the cycle the last one did."""
        for core in self.cores:
            core.start()
        try:
            self.kernel.run(until, self.all_done)
        except CycleLimitExceeded as exc:
            busy = [c.cid for c in self.cores if not c.done]
            raise CycleLimitExceeded(until, f"cores still running: {busy}") from exc
        # let in-flight coherence traffic settle; it cannot change committed data
        self.kernel.run(until + 1_000_000)
        return max((c.finish_cycle for c in self.cores), default=0)

    @property
    def privileged_violations(self) -> int:
        return self.monitor.violations
