import numpy as np
import pytest

from conftest import ZERO, det_instance, random_validated_instance, symmetric_instance
from switchflow.errors import GuardError, ProblemValidationError, SwitchflowError
from switchflow.model import CoefficientFunction as CF, SwitchingProblem
from switchflow.sde import TimeGrid, build_lattice
from switchflow.dp_oracle import (
    enumerate_strategies,
    snell_value,
    switching_value_dp,
)


def _lattice(p, nt=4, x0=0.0, style="binomial"):
    return build_lattice(p, TimeGrid(0.0, p.horizon, nt), x0, style)


class TestSnellValue:
    def test_constant_reward_is_its_own_envelope(self):
        lat = _lattice(symmetric_instance(), nt=3)
        reward = [np.full(s.shape, 2.5) for s in lat.states]
        env = snell_value(lat, reward)
        for r in env:
            assert np.all(r == 2.5)

    def test_two_step_symmetric_binomial_hand_value(self):
        # terminal reward = state on {-1, +1}, intermediate reward 0:
        # root value max(0, 0.5*(-1) + 0.5*(+1)) = 0
        p = symmetric_instance()
        lat = build_lattice(p, TimeGrid(0, 1, 1), 0.0, "binomial")
        reward = [np.zeros(1), lat.states[1].copy()]
        env = snell_value(lat, reward)
        assert env[0][0] == 0.0
        assert np.array_equal(env[1], [-1.0, 1.0])

    def test_nonincreasing_reward_stops_immediately(self):
        lat = _lattice(symmetric_instance(), nt=4)
        reward = [np.full(s.shape, 5.0 - k) for k, s in enumerate(lat.states)]
        env = snell_value(lat, reward)
        assert env[0][0] == 5.0

    def test_dominance_and_supermartingale(self):
        rng = np.random.default_rng(2)
        p = random_validated_instance(rng)
        lat = _lattice(p, nt=6, x0=0.4)
        reward = [np.sin(3.0 * s) + 0.2 * k for k, s in enumerate(lat.states)]
        env = snell_value(lat, reward)
        for k in range(len(env)):
            assert np.all(env[k] >= reward[k] - 1e-14)
        for k in range(len(env) - 1):
            cont = np.asarray(lat.transitions[k] @ env[k + 1]).ravel()
            assert np.all(cont <= env[k] + 1e-12)

    def test_shape_mismatch_rejected(self):
        lat = _lattice(symmetric_instance(), nt=3)
        reward = [np.zeros(s.shape) for s in lat.states]
        reward[1] = np.zeros(99)
        with pytest.raises(SwitchflowError, match="shape"):
            snell_value(lat, reward)


class TestSwitchingValueDp:
    def test_symmetric_modes_never_switch(self):
        p = symmetric_instance()
        lat = _lattice(p, nt=5)
        lv = switching_value_dp(lat, p)
        times = lat.grid.times()
        for k, y in enumerate(lv.values):
            assert np.allclose(y, p.horizon - times[k], atol=1e-12)

    def test_deterministic_hand_value(self):
        p = det_instance()
        lat = _lattice(p, nt=4)
        lv = switching_value_dp(lat, p)
        roots = lv.root_values()
        assert roots[0] == pytest.approx(0.7, abs=1e-12)
        assert roots[1] == pytest.approx(1.0, abs=1e-12)
        lv.check_invariants(p)

    def test_payoff_shift_moves_value_linearly(self):
        rng = np.random.default_rng(4)
        p = random_validated_instance(rng)
        c = 0.75
        shifted = SwitchingProblem(
            p.mode_count,
            [CF(f.x_coef, f.abs_x_coef, f.t_coef, f.const_term + c) for f in p.payoffs],
            p.costs,
            p.drift,
            p.volatility,
            p.horizon,
            p.loop_floor,
        )
        lat = _lattice(p, nt=5, x0=0.2)
        base = switching_value_dp(lat, p)
        up = switching_value_dp(lat, shifted)
        times = lat.grid.times()
        for k in range(len(base.values)):
            expected = base.values[k] + c * (p.horizon - times[k])
            assert np.allclose(up.values[k], expected, atol=1e-12)

    def test_unvalidated_problem_rejected(self):
        p = SwitchingProblem(
            2, [ZERO, ZERO], [[ZERO, ZERO], [ZERO, ZERO]], ZERO, ZERO, 1.0, loop_floor=0.5
        )
        lat = _lattice(symmetric_instance(), nt=3)
        with pytest.raises(ProblemValidationError):
            switching_value_dp(lat, p)

    def test_monotone_in_payoffs(self):
        rng = np.random.default_rng(6)
        p = random_validated_instance(rng, mode_count=2)
        bumped = SwitchingProblem(
            2,
            [CF(p.payoffs[0].x_coef, p.payoffs[0].abs_x_coef, p.payoffs[0].t_coef,
                p.payoffs[0].const_term + 0.5), p.payoffs[1]],
            p.costs, p.drift, p.volatility, p.horizon, p.loop_floor,
        )
        lat = _lattice(p, nt=5, x0=0.1)
        lo = switching_value_dp(lat, p)
        hi = switching_value_dp(lat, bumped)
        for k in range(len(lo.values)):
            assert np.all(hi.values[k] >= lo.values[k] - 1e-12)

    def test_antitone_in_costs(self):
        rng = np.random.default_rng(7)
        p = random_validated_instance(rng, mode_count=2)
        g12 = p.costs[0][1]
        pricier = SwitchingProblem(
            2, p.payoffs,
            [[ZERO, CF(g12.x_coef, g12.abs_x_coef, g12.t_coef, g12.const_term + 0.4)],
             [p.costs[1][0], ZERO]],
            p.drift, p.volatility, p.horizon, p.loop_floor,
        )
        lat = _lattice(p, nt=5, x0=0.1)
        base = switching_value_dp(lat, p)
        dear = switching_value_dp(lat, pricier)
        for k in range(len(base.values)):
            assert np.all(dear.values[k] <= base.values[k] + 1e-12)


class TestEnumerateStrategies:
    def test_zero_budget_is_pure_accrual(self):
        rng = np.random.default_rng(8)
        p = random_validated_instance(rng, mode_count=2)
        lat = _lattice(p, nt=4, x0=0.3)
        best = enumerate_strategies(lat, p, 1, 0)
        dt = lat.grid.dt
        times = lat.grid.times()
        # expected accrual along the chain, computed independently forward
        probs = np.array([1.0])
        total = 0.0
        for k in range(lat.grid.step_count):
            x = lat.states[k]
            total += float(probs @ np.broadcast_to(
                np.asarray(p.payoffs[0](times[k], x), dtype=float), x.shape)) * dt
            probs = np.asarray(probs @ lat.transitions[k].toarray()).ravel()
        assert best.value == pytest.approx(total, abs=1e-12)
        assert best.switches == ()

    def test_deterministic_hand_value_and_description(self):
        p = det_instance()
        lat = _lattice(p, nt=4)
        best = enumerate_strategies(lat, p, 1, 2)
        assert best.value == pytest.approx(0.7, abs=1e-12)
        assert any("1->2" in s and "t=0," in s for s in best.switches)

    def test_matches_dp_at_full_budget(self):
        rng = np.random.default_rng(10)
        for _ in range(3):
            p = random_validated_instance(rng)
            nt = 5
            lat = _lattice(p, nt=nt, x0=0.2)
            lv = switching_value_dp(lat, p)
            for start in p.modes:
                best = enumerate_strategies(lat, p, start, p.mode_count * nt)
                assert best.value == pytest.approx(
                    float(lv.root_values()[start - 1]), abs=1e-12
                )

    def test_dp_dominates_budgeted_enumeration(self):
        rng = np.random.default_rng(11)
        p = random_validated_instance(rng, mode_count=2)
        nt = 5
        lat = _lattice(p, nt=nt, x0=0.0)
        root = float(switching_value_dp(lat, p).root_values()[0])
        prev = -np.inf
        for budget in range(0, 2 * nt + 1):
            val = enumerate_strategies(lat, p, 1, budget).value
            assert val >= prev - 1e-12      # more budget never hurts
            assert val <= root + 1e-12
            prev = val
        assert prev == pytest.approx(root, abs=1e-12)

    def test_guard_rejects_oversized_state_space(self):
        p = symmetric_instance()
        lat = _lattice(p, nt=20)
        with pytest.raises(GuardError, match="guard"):
            enumerate_strategies(lat, p, 1, 200000)

    def test_bad_start_mode(self):
        p = symmetric_instance()
        lat = _lattice(p, nt=3)
        with pytest.raises(SwitchflowError):
            enumerate_strategies(lat, p, 3, 1)


class TestDebugDump:
    def test_lattice_values_csv(self):
        from switchflow.dp_oracle import lattice_values_to_csv

        p = det_instance()
        lat = _lattice(p, nt=2)
        lv = switching_value_dp(lat, p)
        lines = lattice_values_to_csv(lv).strip().splitlines()
        assert lines[0] == "mode,k,t,x,value"
        assert len(lines) == 1 + 2 * 3  # 2 modes x 3 levels x 1 node each


class TestSingleSweepJustification:
    """A triangle-violating instance where one projection sweep undervalues:
    the chain 1 -> 2 -> 3 costs 0.2 while the direct switch costs 5. The
    fixed-point projection and the exhaustive enumeration agree; a single
    sweep does not. This is what the structural validation gate protects
    against."""

    def _instance(self):
        g = CF.constant
        costs = [
            [ZERO, g(0.1), g(5.0)],
            [g(1.0), ZERO, g(0.1)],
            [g(1.0), g(1.0), ZERO],
        ]
        return SwitchingProblem(
            3, [ZERO, ZERO, CF.constant(1.0)], costs, ZERO, ZERO, 1.0, loop_floor=0.5
        )

    def test_one_sweep_undervalues_fixpoint_matches(self):
        p = self._instance()
        lat = _lattice(p, nt=2)
        best = enumerate_strategies(lat, p, 1, 6)
        assert best.value == pytest.approx(0.8, abs=1e-12)  # -0.2 + integral of 1
        full = switching_value_dp(lat, p)
        assert float(full.root_values()[0]) == pytest.approx(best.value, abs=1e-12)
        single = switching_value_dp(lat, p, projection_sweeps=1)
        assert float(single.root_values()[0]) < best.value - 0.1
