"""Experiment runner: one simulator per repetition, stats rows, CSV/JSON output."""

from __future__ import annotations

import dataclasses
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .config import FpMechanism, SimConfig
from .htm import AbortKind
from .kernel import CycleLimitExceeded
from .oracle import Verdict, replay_serial
from .system import System
from .workloads import build_counters, build_dlist, build_queue
from .workloads.counters import Duration, Sync

CSV_FIELDS = ("workload", "threads", "counters", "duration", "sync", "fp", "seed", "commits",
              "aborts_total", "aborts_inval", "aborts_dwng", "aborts_presc", "aborts_capacity",
              "aborts_overflow", "app_failures", "cycles", "throughput_per_kcycle", "oracle_ok")

WORKLOADS = ("counters", "queue", "dlist")
SWEEP_AXES = ("threads", "counters", "duration", "sync", "fp")
DEFAULT_FP = "token"
DEFAULT_CYCLE_LIMIT = 20_000_000


@dataclass
class StatsRecord:
    workload: str
    threads: int
    counters: int
    duration: str
    sync: str
    fp: str
    seed: int
    commits: int = 0
    aborts_total: int = 0
    aborts_inval: int = 0
    aborts_dwng: int = 0
    aborts_presc: int = 0
    aborts_capacity: int = 0
    aborts_overflow: int = 0
    aborts_interrupt: int = 0
    app_failures: int = 0
    cycles: int = 0
    per_thread_successes: list = field(default_factory=list)
    token_requests: int = 0
    token_grants_in_time: int = 0
    stalled_msgs: int = 0
    seq_rounds: int = 0
    max_tshrs_used: int = 0
    privileged_violations: int = 0
    verdicts: dict = field(default_factory=dict)  # check name -> list of problems

    @property
    def throughput_per_kcycle(self) -> float:
        return round(self.commits * 1000 / self.cycles, 3) if self.cycles else 0.0

    @property
    def abort_ratio(self) -> float:
        return self.aborts_total / self.commits if self.commits else float("inf")

    @property
    def oracle_ok(self) -> bool:
        return all(not problems for problems in self.verdicts.values())

    def csv_values(self) -> list:
        out = []
        for name in CSV_FIELDS:
            v = getattr(self, name)
            if isinstance(v, bool):
                v = int(v)
            elif isinstance(v, float):
                v = f"{v:.3f}"
            out.append(v)
        return out

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["throughput_per_kcycle"] = self.throughput_per_kcycle
        d["oracle_ok"] = self.oracle_ok
        return d


@dataclass(frozen=True)
class RunSpec:
    """What to run. Each repetition r uses seed + r."""

    workload: str = "counters"
    threads: int = 2
    counters: int = 2
    duration: str = "short"
    sync: str = "htm"
    fp: str = DEFAULT_FP
    ops: int = 1 << 10
    seed: int = 0
    reps: int = 1
    cycle_limit: int = DEFAULT_CYCLE_LIMIT
    base: SimConfig = SimConfig()
    trace: bool = False

    def __post_init__(self):
        if self.workload not in WORKLOADS:
            raise ValueError(f"unknown workload {self.workload!r}; pick one of {WORKLOADS}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        object.__setattr__(self, "fp", FpMechanism.parse(self.fp).value)
        object.__setattr__(self, "duration", Duration(self.duration).value)
        object.__setattr__(self, "sync", Sync.parse(self.sync).value)

    def replace(self, **changes) -> "RunSpec":
        return dataclasses.replace(self, **changes)

    def label(self) -> str:
        if self.workload == "counters":
            return (f"counters n={self.threads} k={self.counters} {self.duration} "
                    f"sync={self.sync} fp={self.fp} ops={self.ops}")
        return f"{self.workload} n={self.threads} fp={self.fp} ops={self.ops}"

    def config(self, rep: int = 0) -> SimConfig:
        return self.base.replace(num_cores=self.threads, fp_mechanism=self.fp,
                                 seed=self.seed + rep)

    def build(self):
        if self.workload == "counters":
            return build_counters(self.threads, self.counters, self.duration, self.sync,
                                  self.ops, num_tshrs=self.base.num_tshrs,
                                  line_size=self.base.line_size)
        if self.workload == "queue":
            return build_queue(self.threads, self.ops)
        return build_dlist(self.threads, self.ops)


def _summarize(spec: RunSpec, seed: int, system: System, workload, cycles: int) -> StatsRecord:
    counters = spec.counters if spec.workload == "counters" else 0
    duration = spec.duration if spec.workload == "counters" else ""
    sync = spec.sync if spec.workload == "counters" else "htm"
    rec = StatsRecord(spec.workload, spec.threads, counters, duration, sync, spec.fp, seed,
                      cycles=cycles)
    for eng in system.engines:
        st = eng.stats
        rec.commits += st.commits
        rec.aborts_total += st.aborts_total
        rec.aborts_inval += st.aborts[AbortKind.INVALIDATE_HIT]
        rec.aborts_dwng += st.aborts[AbortKind.DOWNGRADE_HIT]
        rec.aborts_capacity += st.aborts[AbortKind.CAPACITY]
        rec.aborts_overflow += st.aborts[AbortKind.TSHR_OVERFLOW]
        rec.aborts_interrupt += st.aborts[AbortKind.INTERRUPT]
        rec.aborts_presc += st.presc
        rec.token_requests += st.token_requests
        rec.token_grants_in_time += st.token_grants_in_time
        rec.stalled_msgs += st.stalled_msgs
        rec.seq_rounds += st.seq_rounds
        rec.max_tshrs_used = max(rec.max_tshrs_used, st.max_tshrs_used)
    threads = [c.thread for c in system.cores]
    rec.app_failures = sum(t.app_failures for t in threads)
    rec.per_thread_successes = [t.successes for t in threads]
    rec.privileged_violations = system.privileged_violations

    replay = replay_serial(system.log, system.initial, system.architectural_memory())
    verdicts = {"serial_replay": Verdict(replay.matches, [] if replay.matches else [
        f"{replay.reason}: {replay.first_divergence}"])}
    verdicts.update(workload.check(system))
    verdicts["token_exclusive"] = Verdict(rec.privileged_violations == 0, [
        f"{rec.privileged_violations} overlapping privileged periods"]
        if rec.privileged_violations else [])
    rec.verdicts = {name: list(v.problems) for name, v in verdicts.items()}
    return rec


def run_once(spec: RunSpec, rep: int = 0):
    """Run one repetition and return (record, system)."""
    seed = spec.seed + rep
    system = System(spec.config(rep), trace=spec.trace)
    workload = spec.build()
    workload.install(system)
    try:
        cycles = system.run(spec.cycle_limit)
    except CycleLimitExceeded as exc:
        raise CycleLimitExceeded(exc.limit, f"{spec.label()} seed={seed}: {exc.detail}") from exc
    return _summarize(spec, seed, system, workload, cycles), system


def _run_rep(args) -> StatsRecord:
    spec, rep = args
    return run_once(spec, rep)[0]


def run_experiment(spec: RunSpec) -> list:
    return [run_once(spec, rep)[0] for rep in range(spec.reps)]


def run_specs(specs: Iterable[RunSpec], jobs: int = 1) -> list:
    """Run every repetition of every spec; rows come back in input order."""
    tasks = [(s, rep) for s in specs for rep in range(s.reps)]
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_rep(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_rep, tasks))


def sweep(axis: str, values: Iterable, spec: RunSpec, jobs: int = 1) -> list:
    if axis == "fp_mechanism":
        axis = "fp"
    if axis not in SWEEP_AXES:
        raise ValueError(f"cannot sweep {axis!r}; pick one of {SWEEP_AXES}")
    return run_specs([spec.replace(**{axis: v}) for v in values], jobs)


def default_grid(ops: int = 1 << 10, seeds: int = 3, fp: str = DEFAULT_FP,
                 cycle_limit: int = DEFAULT_CYCLE_LIMIT) -> list:
    """Counters n x k x duration, plus queue and list at n = 2, 4, 8."""
    common = dict(fp=fp, ops=ops, reps=seeds, cycle_limit=cycle_limit)
    specs = [RunSpec("counters", n, k, d, **common)
             for d in ("short", "long") for k in (2, 3, 4) for n in (2, 4, 8)]
    specs += [RunSpec("queue", n, **common) for n in (2, 4, 8)]
    specs += [RunSpec("dlist", n, **common) for n in (2, 4, 8)]
    return specs


def format_csv(records: list) -> str:
    if not records:
        raise ValueError("no rows to write")
    buf = io.StringIO()
    buf.write(",".join(CSV_FIELDS) + "\n")
    for rec in records:
        buf.write(",".join(str(v) for v in rec.csv_values()) + "\n")
    return buf.getvalue()


def emit_csv(records: list, path) -> None:
    Path(path).write_text(format_csv(records))


def format_json(records: list) -> str:
    return json.dumps([r.to_dict() for r in records], indent=2, sort_keys=True) + "\n"


def mean(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values)


def abort_ratio_mean(records: list, **match) -> Optional[float]:
    rows = [r for r in records if all(getattr(r, k) == v for k, v in match.items())]
    return mean(r.abort_ratio for r in rows) if rows else None
