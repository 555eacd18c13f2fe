"""Independent ground truth on small instances.

Two separate computations of the switching value on a Markov-chain lattice:

  * switching_value_dp: backward induction with obstacle projection per time
    level (the discrete Snell-envelope system);
  * enumerate_strategies: exhaustive evaluation of every adapted pure
    strategy with a switch budget, realised as a budget-indexed sweep over
    the full decision space.

Agreement between the two at the root is itself the oracle test. This module
trades scalability for transparency on purpose.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import GuardError, ProblemValidationError, SchemeInvariantError, SwitchflowError
from .model import SwitchingProblem, eval_coef, validate_problem
from .sde import MarkovChainLattice

__all__ = [
    "LatticeValues",
    "BestStrategy",
    "snell_value",
    "switching_value_dp",
    "enumerate_strategies",
    "lattice_values_to_csv",
]

_STRATEGY_NODE_GUARD = 10_000_000


@dataclass(frozen=True)
class LatticeValues:
    """Per mode, per time index, per lattice node: the switching value."""

    lattice: MarkovChainLattice
    values: List[np.ndarray]      # values[k] has shape (m, len(states[k]))

    def root_values(self) -> np.ndarray:
        """Value per mode at (t_start, x0), shape (m,)."""
        return self.values[0][:, 0].copy()

    def check_invariants(self, p: SwitchingProblem, tol: float = 1e-12) -> None:
        nt = self.lattice.step_count
        if np.any(self.values[nt] != 0.0):
            raise SchemeInvariantError("terminal lattice values must be identically zero")
        times = self.lattice.grid.times()
        for k in range(nt + 1):
            x = self.lattice.states[k]
            y = self.values[k]
            g = _cost_tensor(p, times[k], x)
            for i in range(p.mode_count):
                obstacle = _switch_obstacle(y, g, i)
                defect = float(np.max(obstacle - y[i])) if obstacle.size else 0.0
                if defect > tol:
                    raise SchemeInvariantError(
                        f"obstacle inequality violated by {defect:g} at step {k}, mode {i + 1}"
                    )


def _cost_tensor(p: SwitchingProblem, t: float, x: np.ndarray) -> np.ndarray:
    """g[i, j, node] = cost of switching i+1 -> j+1 at (t, x[node])."""
    m = p.mode_count
    g = np.zeros((m, m, x.size))
    for i in range(m):
        for j in range(m):
            if i != j:
                g[i, j] = np.broadcast_to(
                    np.asarray(eval_coef(p.costs[i][j], t, x), dtype=float), x.shape
                )
    return g


def _switch_obstacle(y: np.ndarray, g: np.ndarray, i: int) -> np.ndarray:
    """max over j != i of (-g_ij + y_j), nodewise."""
    m = y.shape[0]
    best = None
    for j in range(m):
        if j == i:
            continue
        cand = y[j] - g[i, j]
        best = cand if best is None else np.maximum(best, cand)
    return best


def _project_slice(
    c: np.ndarray,
    g: np.ndarray,
    sweeps: Optional[int],
) -> np.ndarray:
    """Project continuation values onto the interconnected obstacles.

    Iterates y_i <- max(c_i, max_{j != i}(-g_ij + y_j)) from y = c.  Each
    sweep extends the admissible same-instant switching chains by one hop;
    under the strict triangle inequality one sweep is already the fixed
    point. With sweeps=None the projection runs to its fixed point (at most
    m sweeps needed when every switching cycle has positive cost)."""
    m = c.shape[0]
    y = c.copy()
    max_sweeps = sweeps if sweeps is not None else m
    for _ in range(max_sweeps):
        y_new = np.empty_like(y)
        for i in range(m):
            y_new[i] = np.maximum(c[i], _switch_obstacle(y, g, i))
        if np.array_equal(y_new, y):
            return y
        y = y_new
    if sweeps is None and m > 1:
        y_check = np.empty_like(y)
        for i in range(m):
            y_check[i] = np.maximum(c[i], _switch_obstacle(y, g, i))
        if not np.array_equal(y_check, y):
            raise SchemeInvariantError(
                "obstacle projection did not reach a fixed point; "
                "the cost matrix admits a non-positive switching cycle"
            )
    return y


def snell_value(lattice: MarkovChainLattice, reward: List[np.ndarray]) -> List[np.ndarray]:
    """Backward induction for the smallest supermartingale dominating the
    reward: R_Nt = reward_Nt, R_k = max(reward_k, E[R_{k+1} | node]).
    """
    nt = lattice.step_count
    if len(reward) != nt + 1:
        raise SwitchflowError(f"reward must have {nt + 1} time slices, got {len(reward)}")
    for k in range(nt + 1):
        if np.asarray(reward[k]).shape != lattice.states[k].shape:
            raise SwitchflowError(
                f"reward slice {k} has shape {np.asarray(reward[k]).shape}, "
                f"lattice has {lattice.states[k].shape}"
            )
    out = [None] * (nt + 1)
    out[nt] = np.asarray(reward[nt], dtype=float).copy()
    for k in range(nt - 1, -1, -1):
        cont = np.asarray(lattice.transitions[k] @ out[k + 1]).ravel()
        out[k] = np.maximum(np.asarray(reward[k], dtype=float), cont)
    return out


def _require_validated(p: SwitchingProblem, lattice: MarkovChainLattice) -> None:
    lo = min(float(np.min(s)) for s in lattice.states)
    hi = max(float(np.max(s)) for s in lattice.states)
    pad = 1e-9 * max(1.0, abs(lo), abs(hi))
    report = validate_problem(p, lo - pad, hi + pad)
    if report.fatal_violations:
        raise ProblemValidationError(
            "problem fails structural validation on the lattice range: "
            + "; ".join(v.describe() for v in report.fatal_violations),
            report=report,
        )


def switching_value_dp(
    lattice: MarkovChainLattice,
    p: SwitchingProblem,
    *,
    projection_sweeps: Optional[int] = None,
    validate: bool = True,
) -> LatticeValues:
    """Backward induction for the interconnected-obstacle system.

    Terminal values are zero; at time index k the continuation is
    c_i = psi_i(t_k, x) * dt + E[Y_i(k+1) | node] (left-endpoint accrual),
    followed by the obstacle projection. projection_sweeps forces a fixed
    number of sweeps (1 reproduces the single-pass variant that is exact
    only under the strict triangle inequality); None runs to the fixed
    point.
    """
    if validate:
        _require_validated(p, lattice)
    m = p.mode_count
    nt = lattice.step_count
    dt = lattice.grid.dt
    times = lattice.grid.times()
    values: List[np.ndarray] = [None] * (nt + 1)
    values[nt] = np.zeros((m, lattice.states[nt].size))
    for k in range(nt - 1, -1, -1):
        x = lattice.states[k]
        cont = np.empty((m, x.size))
        for i in range(m):
            accrual = np.broadcast_to(
                np.asarray(eval_coef(p.payoffs[i], times[k], x), dtype=float), x.shape
            )
            cont[i] = accrual * dt + np.asarray(lattice.transitions[k] @ values[k + 1][i]).ravel()
        g = _cost_tensor(p, times[k], x)
        values[k] = _project_slice(cont, g, projection_sweeps)
    return LatticeValues(lattice=lattice, values=values)


@dataclass(frozen=True)
class BestStrategy:
    value: float
    switches: tuple      # human-readable prescriptions along optimal play

    def describe(self) -> str:
        if not self.switches:
            return "never switch"
        return "; ".join(self.switches)


def enumerate_strategies(
    lattice: MarkovChainLattice,
    p: SwitchingProblem,
    start_mode: int,
    max_switches: int,
    *,
    validate: bool = True,
) -> BestStrategy:
    """Evaluate every adapted pure strategy with at most max_switches mode
    changes per path and return the best expected profit.

    The full decision space (time index, lattice node, running mode,
    remaining switch budget) is swept exhaustively: at every state both
    staying and each admissible switch are valued, switches re-entering the
    same instant with a decremented budget so same-instant chains are
    evaluated without any triangle assumption. Ties prefer staying, then the
    smallest target mode, which selects the lexicographically smallest
    strategy under the action order stay < switch-to-1 < switch-to-2 < ...
    """
    if start_mode < 1 or start_mode > p.mode_count:
        raise SwitchflowError(f"start_mode must be in 1..{p.mode_count}, got {start_mode}")
    if max_switches < 0:
        raise SwitchflowError(f"max_switches must be >= 0, got {max_switches}")
    if validate:
        _require_validated(p, lattice)

    m = p.mode_count
    nt = lattice.step_count
    dt = lattice.grid.dt
    times = lattice.grid.times()
    n_budget = max_switches + 1
    total_nodes = sum(s.size for s in lattice.states)
    state_count = total_nodes * m * n_budget
    if state_count > _STRATEGY_NODE_GUARD:
        raise GuardError(
            f"strategy space has {state_count} nodes "
            f"(= {total_nodes} lattice nodes x {m} modes x {n_budget} budgets), "
            f"guard is {_STRATEGY_NODE_GUARD}"
        )

    # values[k][i, s, node]: best expected profit from (t_k, node) in mode i+1
    # with s switches still allowed.
    values: List[np.ndarray] = [None] * (nt + 1)
    values[nt] = np.zeros((m, n_budget, lattice.states[nt].size))
    for k in range(nt - 1, -1, -1):
        x = lattice.states[k]
        g = _cost_tensor(p, times[k], x)
        stay = np.empty((m, n_budget, x.size))
        for i in range(m):
            accrual = np.broadcast_to(
                np.asarray(eval_coef(p.payoffs[i], times[k], x), dtype=float), x.shape
            ) * dt
            for s in range(n_budget):
                stay[i, s] = accrual + np.asarray(lattice.transitions[k] @ values[k + 1][i, s]).ravel()
        level = np.empty_like(stay)
        level[:, 0] = stay[:, 0]
        for s in range(1, n_budget):
            for i in range(m):
                best = stay[i, s]
                for j in range(m):
                    if j == i:
                        continue
                    best = np.maximum(best, level[j, s - 1] - g[i, j])
                level[i, s] = best
        values[k] = level

    root_value = float(values[0][start_mode - 1, max_switches, 0])

    # Forward reconstruction of the optimal prescriptions along reachable play.
    switches: List[str] = []
    seen = set()
    frontier = [(0, 0, start_mode - 1, max_switches)]
    cap = 1000
    while frontier and len(switches) < cap:
        k, node, i, s = frontier.pop(0)
        if (k, node, i, s) in seen or k >= nt:
            continue
        seen.add((k, node, i, s))
        x = lattice.states[k]
        g = _cost_tensor(p, times[k], np.asarray([x[node]]))
        accrual = float(eval_coef(p.payoffs[i], times[k], x[node])) * dt
        stay_val = accrual + float(
            np.asarray(lattice.transitions[k][node] @ values[k + 1][i, s]).ravel()[0]
        )
        action = -1  # stay
        best_val = stay_val
        if s > 0:
            for j in range(m):
                if j == i:
                    continue
                cand = float(values[k][j, s - 1, node]) - float(g[i, j, 0])
                if cand > best_val + 1e-15:
                    best_val = cand
                    action = j
        if action >= 0:
            switches.append(
                f"t={times[k]:g}, x={x[node]:g}: {i + 1}->{action + 1}"
            )
            frontier.append((k, node, action, s - 1))
        else:
            row = lattice.transitions[k][node]
            for child in row.indices[row.data > 0.0]:
                frontier.append((k + 1, int(child), i, s))
    return BestStrategy(value=root_value, switches=tuple(switches))


def lattice_values_to_csv(lv: LatticeValues) -> str:
    """Debug dump with header mode,k,t,x,value."""
    times = lv.lattice.grid.times()
    buf = io.StringIO()
    buf.write("mode,k,t,x,value\n")
    for k, y in enumerate(lv.values):
        x = lv.lattice.states[k]
        for i in range(y.shape[0]):
            for idx in range(x.size):
                buf.write(f"{i + 1},{k},{times[k]:.17g},{x[idx]:.17g},{y[i, idx]:.17g}\n")
    return buf.getvalue()
