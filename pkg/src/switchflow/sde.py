"""State-diffusion simulation and finite Markov-chain approximations.

The diffusion dX = b(t, X) dt + sigma(t, X) dB is discretised two ways:

  * Euler-Maruyama path ensembles for Monte Carlo policy evaluation, driven
    by a counter-based generator with a bit-exact output contract;
  * recombining lattices (binomial / trinomial) whose one-step conditional
    mean and variance match b*dt and sigma^2*dt, used by the dynamic
    programming oracles.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.sparse as sp

from .errors import LatticeError, SimulationError, SwitchflowError
from .model import SwitchingProblem, eval_coef

__all__ = [
    "TimeGrid",
    "PathEnsemble",
    "MarkovChainLattice",
    "simulate_paths",
    "build_lattice",
    "ensemble_to_csv",
]

# Paths are generated in fixed-size blocks, one Philox stream per block keyed
# by (seed, block index). Each path's noise therefore depends only on the
# master seed and its own index: ensembles are reproducible across platforms,
# blocks may be produced in parallel or serially with identical output, and
# extending n_paths leaves the existing paths bit-identical.
_PATH_BLOCK = 4096

_BINOMIAL_MAX_STEPS = 25
_LEVEL_STATE_GUARD = 200_000


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_start = t_0 < ... < t_Nt = horizon_end."""

    t_start: float
    horizon_end: float
    step_count: int

    def __post_init__(self):
        if not (self.t_start < self.horizon_end):
            raise SwitchflowError(
                f"t_start={self.t_start!r} must be < horizon_end={self.horizon_end!r}"
            )
        if int(self.step_count) < 1:
            raise SwitchflowError(f"step_count must be >= 1, got {self.step_count!r}")
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "horizon_end", float(self.horizon_end))
        object.__setattr__(self, "step_count", int(self.step_count))

    @property
    def dt(self) -> float:
        return (self.horizon_end - self.t_start) / self.step_count

    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.horizon_end, self.step_count + 1)


@dataclass(frozen=True)
class PathEnsemble:
    """Euler-Maruyama sample paths, shape (n_paths, step_count + 1)."""

    paths: np.ndarray
    grid: TimeGrid
    seed: int
    start_state: float

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]


def _normal_increments(seed: int, n_paths: int, n_steps: int) -> np.ndarray:
    if seed < 0 or seed >= 2 ** 64:
        raise SwitchflowError(f"seed must be in [0, 2^64), got {seed}")
    out = np.empty((n_paths, n_steps), dtype=float)
    for block in range((n_paths + _PATH_BLOCK - 1) // _PATH_BLOCK):
        lo = block * _PATH_BLOCK
        hi = min(lo + _PATH_BLOCK, n_paths)
        bg = np.random.Philox(key=np.array([seed, block], dtype=np.uint64))
        gen = np.random.Generator(bg)
        # Row-major generation: the first rows of a block are a prefix of the
        # block's stream, so partial blocks match their full-block content.
        out[lo:hi] = gen.standard_normal((hi - lo, n_steps))
    return out


def simulate_paths(
    p: SwitchingProblem,
    grid: TimeGrid,
    x0: float,
    n_paths: int,
    seed: int,
) -> PathEnsemble:
    """Simulate the state diffusion with the Euler-Maruyama recursion

        X_{k+1} = X_k + b(t_k, X_k) dt + sigma(t_k, X_k) sqrt(dt) xi_k.

    Deterministic given (seed, n_paths, grid, x0, problem). Raises
    SimulationError naming the first offending path and step if a coefficient
    blow-up produces a non-finite state.
    """
    if n_paths < 1:
        raise SwitchflowError(f"n_paths must be >= 1, got {n_paths}")
    nt = grid.step_count
    dt = grid.dt
    sqdt = math.sqrt(dt)
    noise = _normal_increments(int(seed), int(n_paths), nt)
    times = grid.times()

    paths = np.empty((n_paths, nt + 1), dtype=float)
    paths[:, 0] = float(x0)
    x = paths[:, 0].copy()
    for k in range(nt):
        t = times[k]
        b = np.broadcast_to(np.asarray(eval_coef(p.drift, t, x), dtype=float), x.shape)
        s = np.broadcast_to(np.asarray(eval_coef(p.volatility, t, x), dtype=float), x.shape)
        x = x + b * dt + s * sqdt * noise[:, k]
        bad = ~np.isfinite(x)
        if bad.any():
            path_id = int(np.argmax(bad))
            raise SimulationError(
                f"non-finite state on path {path_id} at step {k + 1} "
                f"(t={times[k + 1]:g}); coefficients blow up on the reachable range"
            )
        paths[:, k + 1] = x
    return PathEnsemble(paths=paths, grid=grid, seed=int(seed), start_state=float(x0))


def ensemble_to_csv(ensemble: PathEnsemble) -> str:
    """CSV dump with header path_id,t,x (one row per path per time node)."""
    times = ensemble.grid.times()
    buf = io.StringIO()
    buf.write("path_id,t,x\n")
    for pid in range(ensemble.n_paths):
        row = ensemble.paths[pid]
        for k, t in enumerate(times):
            buf.write(f"{pid},{t:.17g},{row[k]:.17g}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class MarkovChainLattice:
    """Discrete-time, finite-state surrogate for the diffusion.

    states[k] is the sorted state vector at time index k; transitions[k] is
    the row-stochastic matrix from states[k] to states[k+1].
    """

    grid: TimeGrid
    states: List[np.ndarray]
    transitions: List[sp.csr_matrix]
    style: str = "binomial"

    @property
    def step_count(self) -> int:
        return self.grid.step_count

    def root_state(self) -> float:
        return float(self.states[0][0])

    def check_stochastic(self, tol: float = 1e-12) -> float:
        """Return the worst row-sum defect; raise if rows are not stochastic."""
        worst = 0.0
        for k, mat in enumerate(self.transitions):
            sums = np.asarray(mat.sum(axis=1)).ravel()
            defect = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
            worst = max(worst, defect)
            if defect > tol:
                raise LatticeError(f"transition rows at step {k} sum to 1 only within {defect:g}")
            data = mat.data
            if data.size and (data.min() < -tol or data.max() > 1.0 + tol):
                raise LatticeError(f"transition probabilities at step {k} leave [0, 1]")
        return worst

    def local_moments(self, k: int):
        """One-step conditional mean and second central moment of the
        increment at every node of level k (for consistency checks)."""
        x = self.states[k]
        xn = self.states[k + 1]
        mat = self.transitions[k]
        mean = np.asarray(mat @ xn).ravel() - x
        second = np.asarray(mat @ (xn ** 2)).ravel() - 2.0 * x * np.asarray(mat @ xn).ravel() + x ** 2
        return mean, second


def _merge_states(values: np.ndarray, rel_tol: float = 1e-9):
    """Sort values and merge near-duplicates; returns (unique states, index
    of each input value in the merged list)."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    scale = max(1.0, float(np.max(np.abs(sorted_vals))) if sorted_vals.size else 1.0)
    tol = rel_tol * scale
    group_starts = [0]
    for i in range(1, sorted_vals.size):
        if sorted_vals[i] - sorted_vals[group_starts[-1]] > tol:
            group_starts.append(i)
    reps = np.array([sorted_vals[g] for g in group_starts])
    group_of_sorted = np.zeros(sorted_vals.size, dtype=np.int64)
    gi = 0
    for i in range(sorted_vals.size):
        if gi + 1 < len(group_starts) and i >= group_starts[gi + 1]:
            gi += 1
        group_of_sorted[i] = gi
    index = np.empty(values.size, dtype=np.int64)
    index[order] = group_of_sorted
    return reps, index


def _build_binomial(p: SwitchingProblem, grid: TimeGrid, x0: float) -> MarkovChainLattice:
    if grid.step_count > _BINOMIAL_MAX_STEPS:
        raise LatticeError(
            f"binomial lattice limited to {_BINOMIAL_MAX_STEPS} steps for oracle use, "
            f"got {grid.step_count}"
        )
    dt = grid.dt
    sqdt = math.sqrt(dt)
    times = grid.times()
    states = [np.array([float(x0)])]
    transitions = []
    for k in range(grid.step_count):
        x = states[-1]
        t = times[k]
        b = np.broadcast_to(np.asarray(eval_coef(p.drift, t, x), dtype=float), x.shape)
        s = np.broadcast_to(np.asarray(eval_coef(p.volatility, t, x), dtype=float), x.shape)
        up = x + b * dt + s * sqdt
        dn = x + b * dt - s * sqdt
        children = np.concatenate([up, dn])
        if not np.all(np.isfinite(children)):
            raise LatticeError(f"non-finite lattice state at step {k + 1}")
        reps, idx = _merge_states(children)
        if reps.size > _LEVEL_STATE_GUARD:
            raise LatticeError(
                f"binomial lattice does not recombine: {reps.size} states at step {k + 1}"
            )
        n = x.size
        rows = np.concatenate([np.arange(n), np.arange(n)])
        cols = np.concatenate([idx[:n], idx[n:]])
        vals = np.full(2 * n, 0.5)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, reps.size))
        mat.sum_duplicates()
        transitions.append(mat)
        states.append(reps)
    return MarkovChainLattice(grid=grid, states=states, transitions=transitions, style="binomial")


def _build_trinomial(p: SwitchingProblem, grid: TimeGrid, x0: float) -> MarkovChainLattice:
    dt = grid.dt
    nt = grid.step_count
    times = grid.times()

    # Global spacing from a two-pass volatility estimate over the reachable box.
    s0 = max(abs(float(eval_coef(p.volatility, 0.0, x0))), abs(float(eval_coef(p.volatility, p.horizon, x0))))
    b0 = max(abs(float(eval_coef(p.drift, 0.0, x0))), abs(float(eval_coef(p.drift, p.horizon, x0))))
    span = b0 * p.horizon + 4.0 * s0 * math.sqrt(p.horizon) + 1e-12
    probe = np.linspace(x0 - span, x0 + span, 41)
    smax = 0.0
    bmax = 0.0
    for t in (0.0, p.horizon):
        smax = max(smax, float(np.max(np.abs(eval_coef(p.volatility, t, probe)))))
        bmax = max(bmax, float(np.max(np.abs(eval_coef(p.drift, t, probe)))))
    h = math.sqrt(3.0) * max(smax, bmax * math.sqrt(dt), 1e-12) * math.sqrt(dt)

    states = [np.array([float(x0)])]
    transitions = []
    for k in range(nt):
        x = states[-1]
        t = times[k]
        n = x.size
        b = np.broadcast_to(np.asarray(eval_coef(p.drift, t, x), dtype=float), x.shape)
        s = np.broadcast_to(np.asarray(eval_coef(p.volatility, t, x), dtype=float), x.shape)
        var = s * s * dt + b * b * dt * dt
        pu = 0.5 * (var / (h * h) + b * dt / h)
        pd = 0.5 * (var / (h * h) - b * dt / h)
        pm = 1.0 - pu - pd
        if np.min(pu) < 0.0 or np.min(pd) < 0.0 or np.min(pm) < 0.0:
            bad = int(np.argmin(np.minimum(np.minimum(pu, pd), pm)))
            raise LatticeError(
                "trinomial probabilities leave [0, 1] at "
                f"(t={t:g}, x={x[bad]:g}); use a finer time grid (smaller dt)"
            )
        next_states = x0 + h * np.arange(-(k + 1), k + 2, dtype=float)
        offset = 1  # node j at level k maps to node j+1 of level k+1 for a "stay" move
        rows = np.tile(np.arange(n), 3)
        cols = np.concatenate([
            np.arange(n) + offset + 1,
            np.arange(n) + offset,
            np.arange(n) + offset - 1,
        ])
        vals = np.concatenate([pu, pm, pd])
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, next_states.size))
        mat.sum_duplicates()
        transitions.append(mat)
        states.append(next_states)
    return MarkovChainLattice(grid=grid, states=states, transitions=transitions, style="trinomial")


def build_lattice(
    p: SwitchingProblem,
    grid: TimeGrid,
    x0: float,
    style: str = "binomial",
) -> MarkovChainLattice:
    """Build a recombining Markov-chain approximation of the diffusion.

    binomial: children x + b*dt +/- sigma*sqrt(dt) with probability 1/2 each
    (exact one-step mean and variance); coinciding children are merged, so
    constant and multiplicative dynamics recombine. Guarded to small step
    counts.

    trinomial: fixed arithmetic grid of spacing h = sqrt(3)*sigma_max*sqrt(dt)
    with per-node probabilities matching mean b*dt exactly and second moment
    sigma^2*dt + (b*dt)^2; fails with a finer-grid hint if probabilities
    leave [0, 1].
    """
    if style == "binomial":
        lattice = _build_binomial(p, grid, float(x0))
    elif style == "trinomial":
        lattice = _build_trinomial(p, grid, float(x0))
    else:
        raise SwitchflowError(f"unknown lattice style {style!r}; use 'binomial' or 'trinomial'")
    lattice.check_stochastic()
    return lattice
