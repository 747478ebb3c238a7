import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dtsurv import expansion, twostage  # noqa: E402
from dtsurv.data import from_arrays  # noqa: E402
from dtsurv.simulation import CoefficientSpec, generate  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def paper_data():
    """The n = 50,000, d = 30, p = 5 simulated dataset (seed 0)."""
    return generate(50_000, CoefficientSpec.paper(), seed=0)


@pytest.fixture(scope="session")
def paper_fits(paper_data):
    return expansion.fit(paper_data), twostage.fit(paper_data)


@pytest.fixture
def toy():
    """Small hand-made dataset: d = 3, M = 2, p = 2."""
    x = [1, 1, 2, 2, 3, 3, 1, 2, 3, 4, 2, 3, 1, 3, 2]
    j = [1, 2, 1, 0, 2, 1, 0, 2, 0, 0, 1, 1, 1, 2, 2]
    Z = [[0.1, 1.0], [0.5, 0.0], [0.9, 1.0], [0.3, 0.0], [0.7, 1.0],
         [0.2, 0.0], [0.8, 1.0], [0.4, 1.0], [0.6, 0.0], [0.05, 1.0],
         [0.95, 0.0], [0.35, 1.0], [0.65, 0.0], [0.15, 1.0], [0.55, 0.0]]
    return from_arrays(x, j, Z, d=3, M=2)


def random_instance(rng, n=40, d=None, p=None, M=None):
    d = d or int(rng.integers(2, 5))
    p = p or int(rng.integers(1, 3))
    M = M or int(rng.integers(1, 3))
    alpha = rng.uniform(-1.6, -0.6, size=(M, d))
    beta = rng.uniform(-1.0, 1.0, size=(M, p))
    spec = CoefficientSpec(alpha, beta)
    return generate(n, spec, seed=int(rng.integers(2**32))), spec


@pytest.fixture
def rng():
    return np.random.default_rng(20221018)
