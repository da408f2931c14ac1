"""Command line entry point: ``python -m htmsim <counters|queue|dlist|sweep> ...``."""

from __future__ import annotations

import argparse
import sys

from .config import SimConfig, load_config
from .harness import (DEFAULT_CYCLE_LIMIT, DEFAULT_FP, SWEEP_AXES, WORKLOADS, RunSpec,
                      default_grid, format_csv, format_json, run_once, run_specs, sweep)
from .kernel import CycleLimitExceeded

EXIT_ORACLE = 1
EXIT_CYCLE_LIMIT = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=2)
    p.add_argument("--ops", type=int, default=1 << 10, help="total operations across threads")
    p.add_argument("--fp", default=DEFAULT_FP, choices=["none", "token", "sorted"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--cycle-limit", type=int, default=DEFAULT_CYCLE_LIMIT)
    p.add_argument("--config", help="JSON or TOML file of machine parameters")
    p.add_argument("--trace", action="store_true",
                   help="print the coherence message trace to stderr")
    p.add_argument("--out", help="write the CSV table here instead of stdout")
    p.add_argument("--json", action="store_true", help="print full records as JSON")


def _add_counters(p: argparse.ArgumentParser) -> None:
    p.add_argument("--counters", type=int, default=2)
    p.add_argument("--duration", default="short", choices=["short", "long"])
    p.add_argument("--sync", default="htm", choices=["htm", "htm-backoff", "tts", "tts-backoff"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="htmsim",
                                 description="Cycle-level HTM-over-MESI multicore simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("counters", help="k shared counters incremented atomically")
    _add_common(p)
    _add_counters(p)
    for name, text in (("queue", "linked FIFO queue"), ("dlist", "sorted doubly linked list")):
        _add_common(sub.add_parser(name, help=text))
    p = sub.add_parser("sweep", help="vary one parameter, or run the default grid")
    _add_common(p)
    _add_counters(p)
    p.add_argument("--workload", default="counters", choices=WORKLOADS)
    p.add_argument("--axis", choices=SWEEP_AXES + ("fp_mechanism",),
                   help="parameter to vary; omit to run the full default grid")
    p.add_argument("--values", help="comma separated values for --axis")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return ap


def _spec(args, workload: str) -> RunSpec:
    base = load_config(args.config) if args.config else SimConfig()
    kw = dict(threads=args.threads, fp=args.fp, ops=args.ops, seed=args.seed, reps=args.reps,
              cycle_limit=args.cycle_limit, base=base, trace=args.trace)
    if workload == "counters":
        kw.update(counters=args.counters, duration=args.duration, sync=args.sync)
    return RunSpec(workload, **kw)


def _parse_values(axis: str, text: str) -> list:
    items = [v.strip() for v in text.split(",") if v.strip()]
    if axis in ("threads", "counters"):
        return [int(v) for v in items]
    return items


def _print_trace(system, out) -> None:
    for cycle, kind, line, requester, sender, target in system.directory.trace:
        print(f"{cycle} {kind} {line:#x} req={requester} {sender}->{target}", file=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            if args.axis and not args.values:
                raise SystemExit("--axis needs --values")
            if args.axis:
                records = sweep(args.axis, _parse_values(args.axis, args.values),
                                _spec(args, args.workload), jobs=args.jobs)
            else:
                grid = default_grid(args.ops, args.reps, args.fp, args.cycle_limit)
                base = load_config(args.config) if args.config else SimConfig()
                grid = [s.replace(seed=args.seed, base=base) for s in grid]
                records = run_specs(grid, jobs=args.jobs)
        else:
            spec = _spec(args, args.command)
            records = []
            for rep in range(spec.reps):
                rec, system = run_once(spec, rep)
                records.append(rec)
                if args.trace:
                    _print_trace(system, sys.stderr)
    except CycleLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CYCLE_LIMIT
    text = format_json(records) if args.json else format_csv(records)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    bad = [r for r in records if not r.oracle_ok]
    for r in bad:
        problems = {k: v for k, v in r.verdicts.items() if v}
        print(f"oracle violation in {r.workload} n={r.threads} seed={r.seed}: {problems}",
              file=sys.stderr)
    return EXIT_ORACLE if bad else 0


if __name__ == "__main__":
    sys.exit(main())
