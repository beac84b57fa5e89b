import numpy as np
import pytest

from elsem.graph import MixedGraph
from elsem.simulate import gen_graph, gen_params, sample_data, sample_errors


def simulate_instance(seed, m=4, nd=3, nb=1, n=200, dist="gaussian"):
    rng = np.random.default_rng(seed)
    g = gen_graph(m, nd, nb, rng)
    p = gen_params(g, rng)
    data = sample_data(p.B, sample_errors(dist, p.Omega, n, rng))
    return g, p, data.Y


@pytest.fixture
def chain3():
    return MixedGraph(["A", "B", "C"], [("A", "B"), ("B", "C")], [("A", "C")])


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo checks taking more than a few seconds")


ACCEPTANCE: dict[int, str] = {}


def record_criterion(k: int, passed: bool, detail: str) -> None:
    line = f"criterion {k:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[k] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
