import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from polyads.covariates import DenseCovariates
from polyads.graph import SparseCountGraph

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng, D=None, max_dim=4, max_count=6, p=None, density=0.6):
    D = int(rng.choice([2, 3])) if D is None else D
    dims = tuple(int(v) for v in rng.integers(2, max_dim + 1, size=D))
    y = rng.integers(1, max_count + 1, size=dims) * (rng.random(dims) < density)
    p = int(rng.integers(1, 4)) if p is None else p
    cov = DenseCovariates(rng.normal(size=dims + (p,)))
    return SparseCountGraph.from_dense(y), cov


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def polyad_set(records):
    return set(zip(map(tuple, records.top.tolist()), map(tuple, records.bottom.tolist())))


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request, capsys):
    """Record one PASS/FAIL line per criterion; lines are echoed live and in the summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
