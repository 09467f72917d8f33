import numpy as np
import pytest
from hypothesis import settings

from rsh_lab import builtin_problem
from rsh_lab.reproduce import ReproductionContext

# property tests must behave identically on every run
settings.register_profile("repeatable", derandomize=True, deadline=None)
settings.load_profile("repeatable")


@pytest.fixture(scope="session")
def repro_ctx():
    """Shared chains and Monte Carlo batches; the big simulations run once."""
    return ReproductionContext()


@pytest.fixture(scope="session")
def square_problem():
    return builtin_problem("square")


@pytest.fixture(scope="session")
def rsh1_square(repro_ctx):
    return repro_ctx.chain("rsh1", "square")


@pytest.fixture(scope="session")
def rsh2_square(repro_ctx):
    return repro_ctx.chain("rsh2", "square")


@pytest.fixture(scope="session")
def rsh1_shifted(repro_ctx):
    return repro_ctx.chain("rsh1", "shifted_square")


@pytest.fixture(scope="session")
def rsh2_shifted(repro_ctx):
    return repro_ctx.chain("rsh2", "shifted_square")


@pytest.fixture(scope="session")
def sim_rsh1_square(repro_ctx):
    return repro_ctx.sim("rsh1", "square", init=20, max_iter=100_000)


@pytest.fixture(scope="session")
def sim_rsh2_square(repro_ctx):
    return repro_ctx.sim("rsh2", "square", init=20, max_iter=100_000)


@pytest.fixture(scope="session")
def sim_rsh1_shifted(repro_ctx):
    return repro_ctx.sim("rsh1", "shifted_square", init=20, max_iter=100_000, runs=1000, stride=1000)


def exact_nonopt_curve(chain, start_state, horizon):
    """Exact non-optimal probability over time from a point mass, by plain
    vector-matrix iteration."""
    weights = np.zeros(chain.num_transient)
    pos = int(np.searchsorted(chain.non_index, start_state))
    weights[pos] = 1.0
    out = {0: 1.0}
    for t in range(1, horizon + 1):
        weights = weights @ chain.q_block
        out[t] = float(weights.sum())
    return out
