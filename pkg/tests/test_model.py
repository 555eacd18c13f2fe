import numpy as np
import pytest

from conftest import ZERO, random_validated_instance
from switchflow.errors import SwitchflowError
from switchflow.model import (
    CoefficientFunction as CF,
    SwitchingProblem,
    eval_coef,
    validate_problem,
)


class TestCoefficientFunction:
    def test_example1_back_switch_cost(self):
        g21 = CF(0.0, 0.1, 0.5, 2.0)
        assert eval_coef(g21, 1.0, 2.0) == pytest.approx(2.7, abs=0)

    def test_zero_function(self):
        assert eval_coef(ZERO, 3.7, -12.0) == 0.0

    def test_example2_first_payoff_at_origin(self):
        psi1 = CF(1.0, 0.0, 2.0, 1.0)
        assert eval_coef(psi1, 0.0, 0.0) == 1.0

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(5)
        f = CF(*rng.uniform(-2, 2, size=4))
        t = 0.37
        xs = rng.uniform(-5, 5, size=20)
        vec = eval_coef(f, t, xs)
        for xi, vi in zip(xs, vec):
            assert vi == eval_coef(f, t, float(xi))

    def test_non_finite_coefficient_rejected(self):
        with pytest.raises(SwitchflowError):
            CF(float("nan"), 0, 0, 0)

    def test_opaque_callable_supported(self):
        f = lambda t, x: x ** 2 + t
        assert eval_coef(f, 2.0, 3.0) == 11.0


class TestSwitchingProblem:
    def test_rejects_single_mode(self):
        with pytest.raises(SwitchflowError):
            SwitchingProblem(1, [ZERO], [[ZERO]], ZERO, ZERO, 1.0)

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(SwitchflowError, match="diagonal"):
            SwitchingProblem(
                2,
                [ZERO, ZERO],
                [[CF.constant(1.0), ZERO], [ZERO, ZERO]],
                ZERO,
                ZERO,
                1.0,
            )

    def test_rejects_bad_horizon_and_floor(self):
        costs = [[ZERO, CF.constant(1)], [CF.constant(1), ZERO]]
        with pytest.raises(SwitchflowError):
            SwitchingProblem(2, [ZERO, ZERO], costs, ZERO, ZERO, horizon=0.0)
        with pytest.raises(SwitchflowError):
            SwitchingProblem(2, [ZERO, ZERO], costs, ZERO, ZERO, 1.0, loop_floor=0.0)

    def test_payoff_count_checked(self):
        costs = [[ZERO, CF.constant(1)], [CF.constant(1), ZERO]]
        with pytest.raises(SwitchflowError):
            SwitchingProblem(2, [ZERO], costs, ZERO, ZERO, 1.0)

    def test_multiplicative_dynamics_flag(self):
        costs = [[ZERO, CF.constant(1)], [CF.constant(1), ZERO]]
        p = SwitchingProblem(2, [ZERO, ZERO], costs, CF(x_coef=1.0), CF(x_coef=2.0), 1.0)
        assert p.multiplicative_dynamics
        q = SwitchingProblem(2, [ZERO, ZERO], costs, CF(x_coef=1.0), CF.constant(1.0), 1.0)
        assert not q.multiplicative_dynamics


class TestValidateProblem:
    def test_example1_costs_pass(self, example1_problem):
        # g12 + g21 >= 2 on any rectangle, above the floor; triangle vacuous for m=2
        p = example1_problem.__class__(
            **{**example1_problem.__dict__, "loop_floor": 1.0}
        )
        report = validate_problem(p, -5.0, 5.0)
        assert report.passed and report.certified

    def test_free_loop_rejected_with_margin(self):
        p = SwitchingProblem(
            2, [ZERO, ZERO], [[ZERO, ZERO], [ZERO, ZERO]], ZERO, ZERO, 1.0, loop_floor=1.0
        )
        report = validate_problem(p, -1.0, 1.0)
        assert not report.passed
        loop = [v for v in report.violations if v.rule == "loop-floor"]
        assert loop and loop[0].margin == pytest.approx(-1.0, abs=0)
        assert report.fatal_violations

    def test_triangle_violation_reported(self):
        # chain 1 -> 2 -> 3 is free while the direct switch costs 1
        g = CF.constant
        costs = [
            [ZERO, ZERO, g(1.0)],
            [g(1.0), ZERO, ZERO],
            [g(1.0), g(1.0), ZERO],
        ]
        p = SwitchingProblem(3, [ZERO] * 3, costs, ZERO, ZERO, 1.0, loop_floor=0.5)
        report = validate_problem(p, -1.0, 1.0)
        tri = [v for v in report.violations if v.rule == "strict-triangle"]
        assert tri
        worst = min(v.margin for v in tri)
        assert worst == pytest.approx(-1.0, abs=0)
        # triangle findings alone are not fatal for the pipeline gate
        assert all(v.rule == "strict-triangle" for v in report.violations)
        assert not report.fatal_violations

    def test_negative_cost_rejected(self):
        costs = [[ZERO, CF.constant(-0.5)], [CF.constant(2.0), ZERO]]
        p = SwitchingProblem(2, [ZERO, ZERO], costs, ZERO, ZERO, 1.0, loop_floor=0.5)
        report = validate_problem(p, -1.0, 1.0)
        neg = [v for v in report.violations if v.rule == "nonnegative-cost"]
        assert neg and neg[0].modes == (1, 2) and neg[0].margin < 0
        assert report.fatal_violations

    def test_malformed_domain(self, example1_problem):
        with pytest.raises(SwitchflowError, match="malformed"):
            validate_problem(example1_problem, 2.0, -2.0)

    def test_deterministic_report(self, example2_problem):
        r1 = validate_problem(example2_problem, 0.01, 10.0)
        r2 = validate_problem(example2_problem, 0.01, 10.0)
        assert r1 == r2

    def test_worst_point_is_reported(self):
        # g12 = |x| - 2 goes negative only near x = 0; worst point is x = 0
        costs = [[ZERO, CF(0, 1.0, 0, -2.0)], [CF.constant(5.0), ZERO]]
        p = SwitchingProblem(2, [ZERO, ZERO], costs, ZERO, ZERO, 1.0, loop_floor=0.5)
        report = validate_problem(p, -4.0, 4.0)
        neg = [v for v in report.violations if v.rule == "nonnegative-cost"]
        assert neg and neg[0].point[1] == 0.0 and neg[0].margin == pytest.approx(-2.0, abs=0)

    def test_opaque_coefficients_sampled_not_certified(self):
        costs = [[ZERO, (lambda t, x: 1.0 + 0 * x)], [CF.constant(1.0), ZERO]]
        p = SwitchingProblem(2, [ZERO, ZERO], costs, ZERO, ZERO, 1.0, loop_floor=0.5)
        report = validate_problem(p, -1.0, 1.0)
        assert report.passed and not report.certified

    @pytest.mark.parametrize("seed", range(5))
    def test_no_two_switch_chain_beats_direct_on_validated(self, seed):
        rng = np.random.default_rng(seed)
        p = random_validated_instance(rng)
        report = validate_problem(p, -3.0, 3.0)
        assert report.passed
        ts = np.linspace(0.0, p.horizon, 7)
        xs = np.linspace(-3.0, 3.0, 9)
        m = p.mode_count
        for t in ts:
            for x in xs:
                g = [[eval_coef(p.costs[i][j], t, x) for j in range(m)] for i in range(m)]
                for i in range(m):
                    for j in range(m):
                        for k in range(m):
                            if len({i, j, k}) == 3:
                                assert g[i][j] + g[j][k] > g[i][k]
