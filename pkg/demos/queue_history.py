"""Run the FIFO queue and show what the history checker looks at."""

from htmsim import SimConfig, System
from htmsim.workloads import build_queue

n = 4
w = build_queue(n, 64)
s = System(SimConfig(num_cores=n, fp_mechanism="token"))
w.install(s)
cycles = s.run()

events = sorted((ev for c in s.cores for ev in c.thread.notes), key=lambda e: (e.cycle, e.seq))
for ev in events[:12]:
    print(f"cycle {ev.cycle:6d}  {ev.kind}  value {ev.value}  (producer {ev.producer})")
print("...")
print(f"{len(events)} events in {cycles} cycles")
for name, verdict in w.check(s).items():
    print(f"{name}: {'ok' if verdict else verdict.problems}")
