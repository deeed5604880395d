import numpy as np
import pytest

from stopcert import (DiffusionSpec, GridSpec, PayoffSpec, Problem,
                      analytic_fundamental, Expression)


# The running counterexample process: drift x/2, diffusion x, i.e. the
# exponential of a standard Brownian motion.  With discount d^2/2 the
# increasing solution is x^d.
@pytest.fixture(scope="session")
def exp_bm_process():
    return DiffusionSpec.gbm(0.5, 1.0)


@pytest.fixture(scope="session")
def delta4_problem(exp_bm_process):
    return Problem(process=exp_bm_process,
                   payoff=PayoffSpec(terminal=Expression("(x-1)**3 + x**4")),
                   discount=8.0, direction="l")


@pytest.fixture(scope="session")
def delta2_problem(exp_bm_process):
    return Problem(process=exp_bm_process,
                   payoff=PayoffSpec(terminal=Expression("(x-1)**3 + x**2")),
                   discount=2.0, direction="l")


@pytest.fixture(scope="session")
def delta4_pair(delta4_problem):
    return analytic_fundamental(delta4_problem)


@pytest.fixture(scope="session")
def delta2_pair(delta2_problem):
    return analytic_fundamental(delta2_problem)


@pytest.fixture(scope="session")
def gbm_numeric_problem():
    return Problem(process=DiffusionSpec.gbm(0.05, 0.2),
                   payoff=PayoffSpec(terminal=Expression("x - 1")),
                   discount=0.1, direction="l",
                   grid=GridSpec(n_points=2001, lo=0.1, hi=10.0))


@pytest.fixture(scope="session")
def bm_problem():
    return Problem(process=DiffusionSpec.brownian(0.0, np.sqrt(2.0)),
                   payoff=PayoffSpec(terminal=Expression("x")),
                   discount=1.0, direction="l",
                   grid=GridSpec(n_points=2001, lo=-5.0, hi=5.0))
