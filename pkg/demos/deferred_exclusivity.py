"""Two transactions touch the same line; only one of them writes it.

A buffers a store to X and idles before its store-conditional. B reads X and
finishes first. With exclusivity deferred to the SC, A's store never leaves
X's Shared copies and both transactions commit. Asking for ownership at the
store instead (the eager mode) lets B's read hit A's exclusive copy.
"""

from htmsim import SimConfig, System
from htmsim.system import LdLinked, Nop, St, StCond

X, Y, Z = 0x10000, 0x20000, 0x30000


def writer(th):
    yield LdLinked(Z)
    yield St(X, 1)
    yield Nop(300)
    th.note((yield StCond(Z, 1)))


def reader(th):
    yield Nop(60)
    yield LdLinked(X)
    th.note((yield StCond(Y, 2)))


for eager in (False, True):
    s = System(SimConfig(num_cores=2, eager_exclusivity=eager), trace=True)
    s.load_program(0, writer)
    s.load_program(1, reader)
    s.run()
    mode = "eager" if eager else "deferred"
    for cid, name in ((0, "A (writer)"), (1, "B (reader)")):
        eng = s.engines[cid]
        rec = eng.records[-1]
        verdict = "commit" if rec.outcome.committed else f"abort ({rec.outcome.cause.kind.value})"
        print(f"{mode:8s}  {name}: SC at cycle {rec.sc_cycle}, {verdict}")
