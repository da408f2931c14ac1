import pytest

from htmsim.config import SimConfig
from htmsim.system import System


def make_system(**cfg):
    return System(SimConfig(**cfg))


def run_programs(programs, initial=None, until=1_000_000, trace=False, **cfg):
    """Build a system with one core per program, run it, return it."""
    cfg.setdefault("num_cores", len(programs))
    system = System(SimConfig(**cfg), trace=trace)
    for addr, value in (initial or {}).items():
        system.write_memory(addr, value)
    for cid, prog in enumerate(programs):
        if prog is not None:
            system.load_program(cid, prog)
    system.run(until)
    return system


@pytest.fixture
def sys1():
    return make_system(num_cores=1)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
