"""Optimal-policy extraction from a value surface, forward simulation of the
policy on path ensembles, and switch-count statistics.

A policy prescribes, per (mode, time index, space node), either staying or
the best switch target (the argmax of -g_ij + v_j, smallest index on ties).
The simulator walks each path forward, maps off-grid states to their nearest
node for the decision only; payoff rates and switching costs are evaluated
at the path's actual state. Profit accrues with the left-endpoint rule and
costs are charged at the decision time, never at or after the horizon.
Same-instant prescription chains i -> j -> ... -> w collapse to a single
recorded switch charged min(direct cost, chain cost); under the strict
triangle inequality the direct cost is the smaller one, so collapsing never
loses value.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import SwitchflowError
from .model import SwitchingProblem, eval_coef
from .pde import SpaceGrid, ValueSurface, _cost_stack
from .sde import PathEnsemble, TimeGrid

__all__ = [
    "SwitchingPolicy",
    "SwitchRecord",
    "ExecutedStrategy",
    "SwitchTailStats",
    "ValueEstimate",
    "extract_policy",
    "stay_policy",
    "immediate_switch_policy",
    "simulate_strategy",
    "estimate_value",
    "switch_count_tail",
    "executions_to_csv",
    "tail_to_csv",
]

STAY = -1


@dataclass(frozen=True)
class SwitchingPolicy:
    """actions[mode-1, k, node] is STAY (-1) or the 0-based target mode."""

    actions: np.ndarray
    time_grid: TimeGrid
    space_grid: SpaceGrid
    switch_tolerance: float

    @property
    def mode_count(self) -> int:
        return self.actions.shape[0]

    def switch_region_size(self) -> int:
        return int(np.sum(self.actions != STAY))


class SwitchRecord(NamedTuple):
    time_index: int
    time: float
    from_mode: int          # 1-based
    to_mode: int            # 1-based
    cost: float


@dataclass
class ExecutedStrategy:
    """One path's realized switching history and profit."""

    path_id: int
    switches: List[SwitchRecord] = field(default_factory=list)
    payoff_integral: float = 0.0
    total_profit: float = 0.0


@dataclass(frozen=True)
class SwitchTailStats:
    """frequencies[n-1] = empirical P[the n-th switch happens before T]."""

    frequencies: np.ndarray
    sample_size: int
    start_mode: int

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        if f.size and (np.any(f < -1e-15) or np.any(f > 1.0 + 1e-15)):
            raise SwitchflowError("tail frequencies must lie in [0, 1]")
        if f.size > 1 and np.any(np.diff(f) > 1e-15):
            raise SwitchflowError("tail frequencies must be nonincreasing in n")


class ValueEstimate(NamedTuple):
    mean: float
    std_error: float
    n: int


def default_switch_tolerance(surface: ValueSurface) -> float:
    # Pure equality tests on floating-point surfaces would miss the switch
    # region entirely.
    return 1e-7 * (1.0 + surface.max_norm())


def extract_policy(
    surface: ValueSurface,
    p: SwitchingProblem,
    switch_tolerance: Optional[float] = None,
) -> SwitchingPolicy:
    """Switch wherever the obstacle binds within switch_tolerance; the target
    attains max_{j != i}(-g_ij + v_j), smallest index on ties. The terminal
    time index always stays (a switch at T has no effect on profit)."""
    tol = default_switch_tolerance(surface) if switch_tolerance is None else float(switch_tolerance)
    m = surface.mode_count
    nt = surface.time_grid.step_count
    nx = surface.space_grid.node_count
    x = surface.space_grid.nodes()
    times = surface.time_grid.times()
    actions = np.full((m, nt + 1, nx), STAY, dtype=np.int16)
    for k in range(nt):
        g = _cost_stack(p, times[k], x)
        sl = surface.values[:, k, :]
        for i in range(m):
            other = [j for j in range(m) if j != i]
            cand = np.stack([sl[j] - g[i, j] for j in other], axis=0)
            best_pos = np.argmax(cand, axis=0)          # first max: smallest j wins ties
            best_val = cand[best_pos, np.arange(nx)]
            binds = sl[i] <= best_val + tol
            targets = np.asarray(other, dtype=np.int16)[best_pos]
            actions[i, k, binds] = targets[binds]
    return SwitchingPolicy(
        actions=actions,
        time_grid=surface.time_grid,
        space_grid=surface.space_grid,
        switch_tolerance=tol,
    )


def stay_policy(surface: ValueSurface) -> SwitchingPolicy:
    """Hand-crafted suboptimal policy: never switch."""
    m = surface.mode_count
    nt = surface.time_grid.step_count
    nx = surface.space_grid.node_count
    return SwitchingPolicy(
        actions=np.full((m, nt + 1, nx), STAY, dtype=np.int16),
        time_grid=surface.time_grid,
        space_grid=surface.space_grid,
        switch_tolerance=0.0,
    )


def immediate_switch_policy(surface: ValueSurface, from_mode: int, to_mode: int) -> SwitchingPolicy:
    """Hand-crafted policy: switch from_mode -> to_mode at t_0, then stay."""
    pol = stay_policy(surface)
    pol.actions[from_mode - 1, 0, :] = to_mode - 1
    return pol


def simulate_strategy(
    policy: SwitchingPolicy,
    paths: PathEnsemble,
    p: SwitchingProblem,
    start_mode: int = 1,
) -> List[ExecutedStrategy]:
    """Apply the policy along each path and realize its profit."""
    if start_mode < 1 or start_mode > policy.mode_count:
        raise SwitchflowError(f"start_mode must be in 1..{policy.mode_count}, got {start_mode}")
    if paths.grid != policy.time_grid:
        raise SwitchflowError("path ensemble grid does not match the policy grid")
    m = policy.mode_count
    nt = policy.time_grid.step_count
    dt = policy.time_grid.dt
    times = policy.time_grid.times()
    n_paths = paths.n_paths

    modes = np.full(n_paths, start_mode - 1, dtype=np.int64)
    payoff = np.zeros(n_paths)
    cost_paid = np.zeros(n_paths)
    ev_path: List[np.ndarray] = []
    ev_k: List[int] = []
    ev_from: List[np.ndarray] = []
    ev_to: List[np.ndarray] = []
    ev_cost: List[np.ndarray] = []

    for k in range(nt):
        t = times[k]
        x = paths.paths[:, k]
        nodes = policy.space_grid.nearest_index(x)

        # Follow prescription chains (at most m hops), accumulating leg costs.
        final = policy.actions[modes, k, nodes].astype(np.int64)
        final = np.where(final == STAY, modes, final)
        moved = final != modes
        if moved.any():
            chain_cost = np.zeros(n_paths)
            chain_cost[moved] = _pair_cost(p, t, x[moved], modes[moved], final[moved])
            for _ in range(m):
                nxt = policy.actions[final, k, nodes].astype(np.int64)
                active = (nxt != STAY) & (nxt != final)
                if not active.any():
                    break
                chain_cost[active] += _pair_cost(p, t, x[active], final[active], nxt[active])
                final = np.where(active, nxt, final)

        switched = final != modes
        if switched.any():
            idx = np.nonzero(switched)[0]
            direct = _pair_cost(p, t, x[idx], modes[idx], final[idx])
            charged = np.minimum(direct, chain_cost[idx])
            ev_path.append(idx)
            ev_k.append(k)
            ev_from.append(modes[idx] + 1)
            ev_to.append(final[idx] + 1)
            ev_cost.append(charged)
            cost_paid[idx] += charged
            modes = np.where(switched, final, modes)

        # Left-endpoint accrual with the post-switch mode.
        accr = np.zeros(n_paths)
        for i in range(m):
            mask = modes == i
            if mask.any():
                accr[mask] = np.asarray(
                    eval_coef(p.payoffs[i], t, x[mask]), dtype=float
                ) * dt
        payoff += accr

    executions = [ExecutedStrategy(path_id=pid) for pid in range(n_paths)]
    for block in range(len(ev_k)):
        k = ev_k[block]
        t = times[k]
        for pid, fr, to, c in zip(ev_path[block], ev_from[block], ev_to[block], ev_cost[block]):
            executions[int(pid)].switches.append(
                SwitchRecord(time_index=k, time=float(t), from_mode=int(fr), to_mode=int(to), cost=float(c))
            )
    for pid in range(n_paths):
        executions[pid].payoff_integral = float(payoff[pid])
        executions[pid].total_profit = float(payoff[pid] - cost_paid[pid])
    return executions


def _pair_cost(p: SwitchingProblem, t: float, x: np.ndarray, fr: np.ndarray, to: np.ndarray) -> np.ndarray:
    """g_{fr -> to}(t, x) per path, zero where fr == to."""
    m = p.mode_count
    out = np.zeros(x.shape)
    codes = fr * m + to
    for code in np.unique(codes):
        a, b = divmod(int(code), m)
        if a == b:
            continue
        mask = codes == code
        out[mask] = np.asarray(eval_coef(p.costs[a][b], t, x[mask]), dtype=float)
    return out


def estimate_value(executions: List[ExecutedStrategy]) -> ValueEstimate:
    """Sample mean and standard error of the realized total profit."""
    n = len(executions)
    if n < 2:
        raise SwitchflowError("estimate_value needs at least 2 executions")
    j = np.array([e.total_profit for e in executions])
    return ValueEstimate(mean=float(np.mean(j)), std_error=float(np.std(j, ddof=1) / math.sqrt(n)), n=n)


def switch_count_tail(
    executions: List[ExecutedStrategy],
    start_mode: int = 1,
    max_n: Optional[int] = None,
) -> SwitchTailStats:
    """Empirical frequencies of {the n-th switch occurs before the horizon},
    n = 1, 2, ...; nested events make them nonincreasing by construction."""
    if not executions:
        raise SwitchflowError("switch_count_tail needs a nonempty execution list")
    counts = np.array([len(e.switches) for e in executions])
    top = int(max_n) if max_n is not None else max(int(counts.max()), 1)
    freqs = np.array([np.mean(counts >= n) for n in range(1, top + 1)])
    return SwitchTailStats(frequencies=freqs, sample_size=len(executions), start_mode=start_mode)


def executions_to_csv(executions: List[ExecutedStrategy]) -> str:
    """CSV with header path_id,switch_time,from,to,cost (one row per switch)."""
    buf = io.StringIO()
    buf.write("path_id,switch_time,from,to,cost\n")
    for e in executions:
        for rec in e.switches:
            buf.write(f"{e.path_id},{rec.time:.17g},{rec.from_mode},{rec.to_mode},{rec.cost:.17g}\n")
    return buf.getvalue()


def tail_to_csv(stats: SwitchTailStats) -> str:
    """CSV with header n,frequency."""
    buf = io.StringIO()
    buf.write("n,frequency\n")
    for n, f in enumerate(stats.frequencies, start=1):
        buf.write(f"{n},{f:.17g}\n")
    return buf.getvalue()
