"""Switching-problem definition and structural validation of the cost matrix.

Modes are numbered 1..m in every public interface; arrays returned by other
modules use 0-based axes with the same ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import SwitchflowError

__all__ = [
    "CoefficientFunction",
    "Coefficient",
    "SwitchingProblem",
    "Violation",
    "ValidationReport",
    "eval_coef",
    "validate_problem",
]


@dataclass(frozen=True)
class CoefficientFunction:
    """Affine-plus-absolute-value function of (t, x):

        f(t, x) = x_coef * x + abs_x_coef * |x| + t_coef * t + const_term

    This family covers every payoff rate and switching cost used by the
    shipped example configs, and makes structural checks decidable at the
    corners of a rectangle.
    """

    x_coef: float = 0.0
    abs_x_coef: float = 0.0
    t_coef: float = 0.0
    const_term: float = 0.0

    def __post_init__(self):
        for name in ("x_coef", "abs_x_coef", "t_coef", "const_term"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise SwitchflowError(f"coefficient {name} must be finite, got {v!r}")
            object.__setattr__(self, name, float(v))

    def __call__(self, t, x):
        return (
            self.x_coef * x
            + self.abs_x_coef * np.abs(x)
            + self.t_coef * t
            + self.const_term
        )

    @classmethod
    def zero(cls) -> "CoefficientFunction":
        return cls()

    @classmethod
    def constant(cls, c: float) -> "CoefficientFunction":
        return cls(const_term=c)

    @property
    def is_zero(self) -> bool:
        return self.x_coef == 0.0 and self.abs_x_coef == 0.0 and self.t_coef == 0.0 and self.const_term == 0.0

    @property
    def is_pure_x_multiple(self) -> bool:
        """True when f(t, x) = x_coef * x; such drift/volatility pairs admit a
        constant-coefficient formulation in log space."""
        return self.abs_x_coef == 0.0 and self.t_coef == 0.0 and self.const_term == 0.0


# Library users may pass opaque evaluators f(t, x) -> value in place of the
# parametric family; validation then falls back to dense sampling.
Coefficient = Union[CoefficientFunction, Callable]


def eval_coef(f: Coefficient, t, x):
    """Evaluate a coefficient at (t, x); x may be a scalar or ndarray."""
    if isinstance(f, CoefficientFunction):
        return f(t, x)
    return f(t, x)


def _as_coef_matrix(costs, m) -> tuple:
    rows = tuple(tuple(row) for row in costs)
    if len(rows) != m or any(len(r) != m for r in rows):
        raise SwitchflowError(f"costs must be an {m}x{m} matrix of coefficient functions")
    return rows


@dataclass(frozen=True)
class SwitchingProblem:
    """The full continuous-time switching problem.

    payoffs[i-1] is the profit rate in mode i; costs[i-1][j-1] the lump sum
    charged on an i -> j switch. The diagonal of costs must be identically
    zero. loop_floor is the constant below which no round trip i -> j -> i
    may cost (strictly).
    """

    mode_count: int
    payoffs: Sequence[Coefficient]
    costs: Sequence[Sequence[Coefficient]]
    drift: Coefficient
    volatility: Coefficient
    horizon: float
    loop_floor: float = 1e-6

    def __post_init__(self):
        m = int(self.mode_count)
        if m < 2:
            raise SwitchflowError(f"mode_count must be >= 2, got {m}")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise SwitchflowError(f"horizon must be a positive finite real, got {self.horizon!r}")
        if not (self.loop_floor > 0.0 and math.isfinite(self.loop_floor)):
            raise SwitchflowError(f"loop_floor must be a positive finite real, got {self.loop_floor!r}")
        payoffs = tuple(self.payoffs)
        if len(payoffs) != m:
            raise SwitchflowError(f"expected {m} payoff functions, got {len(payoffs)}")
        costs = _as_coef_matrix(self.costs, m)
        for i in range(m):
            gii = costs[i][i]
            if not (isinstance(gii, CoefficientFunction) and gii.is_zero):
                raise SwitchflowError(
                    f"diagonal switching cost g[{i + 1}][{i + 1}] must be identically zero"
                )
        object.__setattr__(self, "mode_count", m)
        object.__setattr__(self, "payoffs", payoffs)
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "loop_floor", float(self.loop_floor))

    @property
    def modes(self) -> range:
        """Mode labels 1..m."""
        return range(1, self.mode_count + 1)

    def payoff(self, mode: int) -> Coefficient:
        return self.payoffs[mode - 1]

    def cost(self, from_mode: int, to_mode: int) -> Coefficient:
        return self.costs[from_mode - 1][to_mode - 1]

    @property
    def all_affine(self) -> bool:
        """True when every coefficient belongs to the parametric family."""
        fns = list(self.payoffs) + [self.drift, self.volatility]
        for row in self.costs:
            fns.extend(row)
        return all(isinstance(f, CoefficientFunction) for f in fns)

    @property
    def multiplicative_dynamics(self) -> bool:
        """True when drift and volatility are pure multiples of x, the case
        where a log-space grid has constant coefficients."""
        return (
            isinstance(self.drift, CoefficientFunction)
            and isinstance(self.volatility, CoefficientFunction)
            and self.drift.is_pure_x_multiple
            and self.volatility.is_pure_x_multiple
        )


@dataclass(frozen=True)
class Violation:
    rule: str                     # "nonnegative-cost" | "strict-triangle" | "loop-floor"
    modes: tuple                  # 1-based mode indices involved
    point: tuple                  # worst (t, x) sample
    margin: float                 # rule left side minus right side; <= 0 means violated

    def describe(self) -> str:
        mode_s = "->".join(str(i) for i in self.modes)
        t, x = self.point
        return f"{self.rule} [{mode_s}] at (t={t:g}, x={x:g}): margin {self.margin:g}"


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple
    certified: bool = True        # False when checked by dense sampling only

    def __post_init__(self):
        if self.passed != (len(self.violations) == 0):
            raise SwitchflowError("ValidationReport invariant: passed <=> no violations")

    @property
    def fatal_violations(self) -> tuple:
        """Violations that make the solver stack unsound (free or negative
        loops). Strict-triangle findings only degrade same-instant switching
        optimality, which the solvers handle explicitly, so they are reported
        but do not block a run."""
        return tuple(v for v in self.violations if v.rule != "strict-triangle")

    def describe(self) -> str:
        if self.passed:
            return "passed" + ("" if self.certified else " (sampled, not certified)")
        lines = [v.describe() for v in self.violations]
        head = "failed" + ("" if self.certified else " (sampled, not certified)")
        return head + ": " + "; ".join(lines)


def _sample_points(p: SwitchingProblem, x_min: float, x_max: float, certified: bool, nodes: int):
    if certified:
        xs = [x_min, x_max]
        if x_min < 0.0 < x_max:
            xs.append(0.0)
        ts = [0.0, p.horizon]
    else:
        xs = np.linspace(x_min, x_max, nodes)
        if x_min < 0.0 < x_max:
            xs = np.union1d(xs, [0.0])
        ts = np.linspace(0.0, p.horizon, nodes)
    tt, xx = np.meshgrid(np.asarray(ts, dtype=float), np.asarray(xs, dtype=float), indexing="ij")
    return tt.ravel(), xx.ravel()


def validate_problem(
    p: SwitchingProblem,
    x_min: float,
    x_max: float,
    *,
    eps_strict: float = 0.0,
    sample_nodes: int = 101,
) -> ValidationReport:
    """Check the structural cost assumptions on [0, horizon] x [x_min, x_max].

    Rules, each reported with its worst sample point and margin (margin is
    the checked left side minus right side, so violations have margin <= 0
    for the strict rules and < 0 for nonnegativity):

      nonnegative-cost   g_ij(t, x) >= 0                    for i != j
      strict-triangle    g_ij + g_jk >  g_ik                for distinct i, j, k
      loop-floor         g_ij + g_ji >  loop_floor          for i != j

    For problems built entirely from the parametric coefficient family, each
    rule is affine in t and piecewise affine in x with a kink only at x = 0,
    so checking the rectangle corners plus x = 0 is exhaustive. Problems with
    opaque coefficient evaluators are checked on a dense sample grid and the
    report is marked not certified.
    """
    if not (math.isfinite(x_min) and math.isfinite(x_max)):
        raise SwitchflowError("validation domain bounds must be finite")
    if x_min >= x_max:
        raise SwitchflowError(f"malformed domain: x_min={x_min!r} >= x_max={x_max!r}")

    certified = p.all_affine
    ts, xs = _sample_points(p, float(x_min), float(x_max), certified, sample_nodes)
    m = p.mode_count

    # g values at the sample points, indexed [i][j] -> array over points
    g = [[np.asarray(eval_coef(p.costs[i][j], ts, xs), dtype=float) for j in range(m)] for i in range(m)]

    violations = []

    def worst(margins):
        k = int(np.argmin(margins))
        return float(margins[k]), (float(ts[k]), float(xs[k]))

    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            margin, point = worst(g[i][j])
            if margin < 0.0:
                violations.append(Violation("nonnegative-cost", (i + 1, j + 1), point, margin))

    for i in range(m):
        for j in range(m):
            if j == i:
                continue
            for k in range(m):
                if k == i or k == j:
                    continue
                margin, point = worst(g[i][j] + g[j][k] - g[i][k])
                if margin <= eps_strict:
                    violations.append(Violation("strict-triangle", (i + 1, j + 1, k + 1), point, margin))

    for i in range(m):
        for j in range(i + 1, m):
            margin, point = worst(g[i][j] + g[j][i] - p.loop_floor)
            if margin <= eps_strict:
                violations.append(Violation("loop-floor", (i + 1, j + 1), point, margin))

    return ValidationReport(passed=not violations, violations=tuple(violations), certified=certified)
