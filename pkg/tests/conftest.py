import sys

import pytest

from quad2bsde import make_problem
from quad2bsde.benchmarks import benchmark


@pytest.fixture
def square_problem():
    return benchmark("square", n_grid=5)[0]


@pytest.fixture
def pq_linear():
    return benchmark("pq_linear")[0]


@pytest.fixture
def constant_problem():
    return make_problem("zero", "constant", terminal_params={"c": 0.7})



def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    if mod is None:
        return
    res = mod.RESULTS
    terminalreporter.section("acceptance criteria")
    for criterion in range(1, 12):
        parts = res.get(criterion)
        if not parts:
            terminalreporter.write_line(f"criterion {criterion:2d}: FAIL  (did not run to completion)")
            continue
        ok = all(p[1] for p in parts)
        detail = "; ".join(p[2] for p in parts)
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
