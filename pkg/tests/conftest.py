import numpy as np
import pytest

from antedata.grid import make_grid
from antedata.models import BernoulliModel, Dataset, beta_state, conjugate_to_grid

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def unit_grid():
    return make_grid(0.0, 1.0, 4001)


@pytest.fixture
def coin_data():
    """Seven heads, three tails; five groups of two."""
    return Dataset(
        np.array([1, 1, 0, 1, 1, 0, 1, 1, 0, 1], dtype=float),
        ("g1", "g1", "g2", "g2", "g3", "g3", "g4", "g4", "g5", "g5"),
    )


@pytest.fixture
def flat_prior(unit_grid):
    return conjugate_to_grid(beta_state(1.0, 1.0), unit_grid)


@pytest.fixture
def bernoulli():
    return BernoulliModel()
