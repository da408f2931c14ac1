"""Abort ratio of the shared-counter benchmark as threads and counters grow.

Runs a small slice of the default grid and prints mean aborts per commit, plus
the share of aborts that hit before the store-conditional.
"""

import sys

from htmsim.harness import RunSpec, mean, run_specs

ops = int(sys.argv[1]) if len(sys.argv) > 1 else 512
specs = [RunSpec("counters", n, k, d, ops=ops, reps=2)
         for d in ("short", "long") for k in (2, 3, 4) for n in (2, 4, 8)]
rows = run_specs(specs)

print(f"{'duration':8s} {'k':>2s} {'n':>2s} {'aborts/commit':>14s} {'pre-SC share':>13s}")
for spec in specs:
    sel = [r for r in rows if (r.threads, r.counters, r.duration)
           == (spec.threads, spec.counters, spec.duration)]
    ratio = mean(r.abort_ratio for r in sel)
    presc = mean(r.aborts_presc / r.aborts_total if r.aborts_total else 0.0 for r in sel)
    print(f"{spec.duration:8s} {spec.counters:2d} {spec.threads:2d} {ratio:14.2f} {presc:13.2f}")
