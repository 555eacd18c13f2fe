import math

import numpy as np
import pytest

from switchflow import example_config_path, load_config
from switchflow.model import CoefficientFunction as CF
from switchflow.model import SwitchingProblem

ZERO = CF.zero()
SQRT2 = math.sqrt(2.0)


def det_instance():
    """Deterministic two-mode instance with hand value 0.7: no dynamics,
    mode 2 pays 1 per unit time, switching 1 -> 2 costs 0.3, back costs 10."""
    return SwitchingProblem(
        mode_count=2,
        payoffs=[ZERO, CF.constant(1.0)],
        costs=[[ZERO, CF.constant(0.3)], [CF.constant(10.0), ZERO]],
        drift=ZERO,
        volatility=ZERO,
        horizon=1.0,
        loop_floor=0.5,
    )


def symmetric_instance():
    """Identical payoffs, strictly positive costs: switching is wasteful."""
    return SwitchingProblem(
        mode_count=2,
        payoffs=[CF.constant(1.0), CF.constant(1.0)],
        costs=[[ZERO, CF.constant(0.5)], [CF.constant(0.5), ZERO]],
        drift=ZERO,
        volatility=CF.constant(1.0),
        horizon=1.0,
        loop_floor=0.25,
    )


def random_validated_instance(rng: np.random.Generator, mode_count=None):
    """Random instance built to satisfy every structural rule:
    costs g_ij = a_i + b_j + delta with nonnegative coefficient parts and a
    positive constant delta satisfy the strict triangle inequality and the
    loop floor by construction. Constant drift and volatility keep binomial
    lattices recombining."""
    m = int(mode_count if mode_count is not None else rng.integers(2, 4))
    delta = 0.2 + 0.3 * rng.random()

    def nonneg_part():
        # nonnegative combination of |x|, t, 1
        return np.array([0.0, rng.random() * 0.4, rng.random() * 0.4, rng.random() * 0.5])

    a = [nonneg_part() for _ in range(m)]
    b = [nonneg_part() for _ in range(m)]
    costs = []
    for i in range(m):
        row = []
        for j in range(m):
            if i == j:
                row.append(ZERO)
            else:
                c = a[i] + b[j]
                row.append(CF(c[0], c[1], c[2], c[3] + delta))
        costs.append(row)
    payoffs = [
        CF(rng.uniform(-1, 1), rng.uniform(-0.5, 0.5), rng.uniform(-1, 1), rng.uniform(-2, 2))
        for _ in range(m)
    ]
    return SwitchingProblem(
        mode_count=m,
        payoffs=payoffs,
        costs=costs,
        drift=CF.constant(rng.uniform(-0.3, 0.3)),
        volatility=CF.constant(rng.uniform(0.2, 0.8)),
        horizon=1.0,
        loop_floor=delta,
    )


@pytest.fixture(scope="session")
def example1_config():
    return load_config(example_config_path("example1"))


@pytest.fixture(scope="session")
def example2_config():
    return load_config(example_config_path("example2"))


@pytest.fixture(scope="session")
def example1_problem(example1_config):
    return example1_config.problem


@pytest.fixture(scope="session")
def example2_problem(example2_config):
    return example2_config.problem
