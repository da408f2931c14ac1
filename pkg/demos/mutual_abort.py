"""Two transactions each read the line the other one writes.

Both reach their store-conditional, both ask for ownership, and each request
invalidates the other side's read-set. Retrying with the same fixed pause
repeats the pattern forever. With the token mechanism the second attempt is
flagged as a repeat, the token holder holds off the conflicting request, and
both finish. Ordered acquisition does not help here since each conflict
lands on a read-set line, not on a contended write-set line.
"""

from htmsim import CycleLimitExceeded, SimConfig, System
from htmsim.system import LdLinked, Nop, StCond

A, B = 0x10000, 0x20000


def bump(read_line, write_line):
    def prog(th):
        while True:
            yield LdLinked(read_line)
            v = yield LdLinked(write_line)
            if (yield StCond(write_line, v + 1)) == 0:
                return
            yield Nop(3)
    return prog


for fp in ("none", "token", "sorted"):
    s = System(SimConfig(num_cores=2, fp_mechanism=fp))
    s.load_program(0, bump(A, B))
    s.load_program(1, bump(B, A))
    try:
        cycles = s.run(50_000)
        aborts = [e.stats.aborts_total for e in s.engines]
        print(f"fp={fp:6s} finished at cycle {cycles}, aborts per core {aborts}, "
              f"overlapping token holders {s.privileged_violations}")
    except CycleLimitExceeded:
        aborts = sum(e.stats.aborts_total for e in s.engines)
        print(f"fp={fp:6s} no commit after 50000 cycles ({aborts} aborts)")
