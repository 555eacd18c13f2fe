import math

import numpy as np
import pytest

from conftest import ZERO, random_validated_instance
from switchflow.errors import LatticeError, SimulationError, SwitchflowError
from switchflow.model import CoefficientFunction as CF, SwitchingProblem
from switchflow.sde import (
    TimeGrid,
    build_lattice,
    ensemble_to_csv,
    simulate_paths,
)


def _two_mode(drift, vol):
    costs = [[ZERO, CF.constant(1.0)], [CF.constant(1.0), ZERO]]
    return SwitchingProblem(2, [ZERO, ZERO], costs, drift, vol, 1.0, loop_floor=0.5)


class TestTimeGrid:
    def test_basic(self):
        g = TimeGrid(0.0, 1.0, 4)
        assert g.dt == 0.25
        assert np.allclose(g.times(), [0, 0.25, 0.5, 0.75, 1.0])

    def test_rejects_degenerate(self):
        with pytest.raises(SwitchflowError):
            TimeGrid(1.0, 1.0, 4)
        with pytest.raises(SwitchflowError):
            TimeGrid(0.0, 1.0, 0)


class TestSimulatePaths:
    def test_zero_dynamics_constant_paths(self):
        p = _two_mode(ZERO, ZERO)
        ens = simulate_paths(p, TimeGrid(0, 1, 8), 3.0, 50, seed=1)
        assert np.all(ens.paths == 3.0)

    def test_deterministic_given_seed(self):
        p = _two_mode(CF(x_coef=0.1), CF.constant(0.4))
        a = simulate_paths(p, TimeGrid(0, 1, 16), 1.0, 200, seed=42)
        b = simulate_paths(p, TimeGrid(0, 1, 16), 1.0, 200, seed=42)
        assert np.array_equal(a.paths, b.paths)
        c = simulate_paths(p, TimeGrid(0, 1, 16), 1.0, 200, seed=43)
        assert not np.array_equal(a.paths, c.paths)

    def test_prefix_stable_when_extending_ensemble(self):
        p = _two_mode(CF(x_coef=0.1), CF.constant(0.4))
        small = simulate_paths(p, TimeGrid(0, 1, 16), 1.0, 5000, seed=7)
        big = simulate_paths(p, TimeGrid(0, 1, 16), 1.0, 10000, seed=7)
        assert np.array_equal(big.paths[:5000], small.paths)

    def test_gbm_mean_matches_closed_form(self):
        # dX = X dt + sqrt(2) X dB from 1: E[X_T] = e
        p = _two_mode(CF(x_coef=1.0), CF(x_coef=math.sqrt(2.0)))
        ens = simulate_paths(p, TimeGrid(0, 1, 100), 1.0, 20000, seed=11)
        xt = ens.paths[:, -1]
        se = np.std(xt, ddof=1) / math.sqrt(xt.size)
        assert abs(np.mean(xt) - math.e) <= 3 * se

    def test_blowup_reported_with_path_and_step(self):
        p = _two_mode(lambda t, x: x * 1e200, ZERO)
        with np.errstate(over="ignore"), pytest.raises(SimulationError, match=r"path \d+ at step \d+"):
            simulate_paths(p, TimeGrid(0, 1, 4), 1.0, 3, seed=0)

    def test_seed_range_checked(self):
        p = _two_mode(ZERO, ZERO)
        with pytest.raises(SwitchflowError):
            simulate_paths(p, TimeGrid(0, 1, 2), 0.0, 2, seed=-1)

    def test_csv_dump_shape(self):
        p = _two_mode(ZERO, ZERO)
        ens = simulate_paths(p, TimeGrid(0, 1, 2), 1.5, 2, seed=3)
        lines = ensemble_to_csv(ens).strip().splitlines()
        assert lines[0] == "path_id,t,x"
        assert len(lines) == 1 + 2 * 3


class TestBuildLattice:
    def test_symmetric_binomial_single_step(self):
        p = _two_mode(ZERO, CF.constant(1.0))
        lat = build_lattice(p, TimeGrid(0, 1, 1), 0.0, "binomial")
        assert np.allclose(lat.states[1], [-1.0, 1.0])
        assert np.allclose(lat.transitions[0].toarray(), [[0.5, 0.5]])

    def test_rows_stochastic(self):
        rng = np.random.default_rng(3)
        for _ in range(3):
            p = random_validated_instance(rng)
            lat = build_lattice(p, TimeGrid(0, 1, 6), 0.5, "binomial")
            assert lat.check_stochastic(1e-12) <= 1e-12
            tri = build_lattice(p, TimeGrid(0, 1, 6), 0.5, "trinomial")
            assert tri.check_stochastic(1e-12) <= 1e-12

    def test_deterministic_euler_chain(self):
        p = _two_mode(CF(x_coef=1.0), ZERO)
        lat = build_lattice(p, TimeGrid(0, 1, 2), 1.0, "binomial")
        assert [s.tolist() for s in lat.states] == [[1.0], [1.5], [2.25]]
        for mat in lat.transitions:
            assert np.allclose(mat.toarray(), [[1.0]])

    def test_local_consistency_node_by_node(self):
        rng = np.random.default_rng(9)
        p = random_validated_instance(rng)
        grid = TimeGrid(0, 1, 5)
        for style in ("binomial", "trinomial"):
            lat = build_lattice(p, grid, 0.3, style)
            times = grid.times()
            for k in range(grid.step_count):
                mean, second = lat.local_moments(k)
                x = lat.states[k]
                b = np.asarray(p.drift(times[k], x), dtype=float)
                s = np.asarray(p.volatility(times[k], x), dtype=float)
                b = np.broadcast_to(b, x.shape)
                s = np.broadcast_to(s, x.shape)
                assert np.allclose(mean, b * grid.dt, atol=1e-12)
                expected_second = s ** 2 * grid.dt + (b * grid.dt) ** 2
                assert np.allclose(second, expected_second, atol=1e-10)

    def test_multiplicative_dynamics_recombine(self):
        p = _two_mode(CF(x_coef=1.0), CF(x_coef=math.sqrt(2.0)))
        lat = build_lattice(p, TimeGrid(0, 1, 10), 1.0, "binomial")
        for k, states in enumerate(lat.states):
            assert states.size == k + 1

    def test_binomial_step_guard(self):
        p = _two_mode(ZERO, CF.constant(1.0))
        with pytest.raises(LatticeError, match="25"):
            build_lattice(p, TimeGrid(0, 1, 26), 0.0, "binomial")

    def test_trinomial_probability_failure_advises_finer_grid(self):
        # volatility exploding away from x0 overwhelms the fixed spacing
        p = _two_mode(ZERO, CF(0, 40.0, 0, 0.01))
        with pytest.raises(LatticeError, match="finer time grid"):
            build_lattice(p, TimeGrid(0, 1, 3), 0.0, "trinomial")

    def test_unknown_style(self):
        p = _two_mode(ZERO, ZERO)
        with pytest.raises(SwitchflowError, match="style"):
            build_lattice(p, TimeGrid(0, 1, 2), 0.0, "quadrinomial")
