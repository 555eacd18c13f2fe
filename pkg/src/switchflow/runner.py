"""Orchestration of validate -> solve -> simulate -> report.

Produces a RunResult holding the summary (deterministic given the config,
including the seed), the artifact files as text, and the exit code:

    0  every gate passed
    2  structural validation failed (run aborted)
    3  an invariant gate failed (obstacle / complementarity / MC consistency)

Wall-clock timings live on the summary object but are excluded from the
canonical summary JSON so that identical configs produce byte-identical
output; they are emitted as a separate sidecar by the CLI.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from . import __version__
from .config import RunConfig
from .model import validate_problem
from .pde import (
    SpaceGrid,
    picard_solve,
    solve_system,
    suggest_space_grid,
    surface_to_csv,
)
from .sde import TimeGrid, simulate_paths
from .strategy import (
    estimate_value,
    executions_to_csv,
    extract_policy,
    simulate_strategy,
    switch_count_tail,
    tail_to_csv,
)

__all__ = ["RunResult", "run", "build_grids", "summary_json"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_GATE = 3


@dataclass
class RunResult:
    summary: Dict[str, object]
    artifacts: Dict[str, str] = field(default_factory=dict)
    exit_code: int = EXIT_OK
    timings: Dict[str, float] = field(default_factory=dict)


def build_grids(cfg: RunConfig):
    tg = TimeGrid(0.0, cfg.problem.horizon, cfg.time_steps)
    if cfg.x_min is not None and cfg.x_max is not None:
        log_space = cfg.log_space
        if log_space is None:
            log_space = cfg.problem.multiplicative_dynamics and cfg.x_min > 0.0
        sg = SpaceGrid(cfg.x_min, cfg.x_max, cfg.space_nodes, log_space=log_space)
    else:
        sg = suggest_space_grid(cfg.problem, cfg.x0, cfg.space_nodes, log_space=cfg.log_space)
    return tg, sg


def _validation_block(report) -> Dict[str, object]:
    return {
        "passed": report.passed,
        "certified": report.certified,
        "fatal": bool(report.fatal_violations),
        "violations": [
            {
                "rule": v.rule,
                "modes": list(v.modes),
                "point": {"t": v.point[0], "x": v.point[1]},
                "margin": v.margin,
            }
            for v in report.violations
        ],
    }


def run(
    cfg: RunConfig,
    *,
    stages: str = "run",
    progress=None,
) -> RunResult:
    """Execute the pipeline.

    stages: "validate" (structure checks only), "solve" (adds the PDE solve
    and surface artifacts), "simulate" or "run" (adds Monte Carlo policy
    evaluation, tail statistics and the full gate set).
    """
    timings: Dict[str, float] = {}

    def tick(name, t0):
        timings[name] = round(time.perf_counter() - t0, 6)
        if progress is not None:
            progress(f"{name}: {timings[name]:.3f}s")

    p = cfg.problem
    tg, sg = build_grids(cfg)

    t0 = time.perf_counter()
    report = validate_problem(p, sg.x_min, sg.x_max)
    tick("validate", t0)

    summary: Dict[str, object] = {
        "artifact_version": __version__,
        "config_echo": dict(sorted(cfg.echo.items())),
        "grid": {
            "time_steps": tg.step_count,
            "space_nodes": sg.node_count,
            "x_min": sg.x_min,
            "x_max": sg.x_max,
            "log_space": sg.log_space,
            "dt": tg.dt,
            "dx": sg.spacing,
        },
        "validation": _validation_block(report),
    }

    result = RunResult(summary=summary, timings=timings)
    if report.fatal_violations:
        result.exit_code = EXIT_VALIDATION
        return result
    if stages == "validate":
        # Strict-triangle findings are reported above but are advisory for
        # pipeline gating (see ValidationReport.fatal_violations).
        result.exit_code = EXIT_OK
        return result

    gates: List[Dict[str, object]] = []

    def gate(name, passed, detail):
        gates.append({"name": name, "passed": bool(passed), "detail": detail})

    t0 = time.perf_counter()
    surface, residuals = solve_system(p, tg, sg, cfg.scheme, validate=False)
    tick("solve_system", t0)

    root = {str(i): surface.value_at_start(i, cfg.x0) for i in p.modes}
    summary["root_values"] = root
    summary["residuals"] = residuals.as_dict()

    norm = surface.max_norm()
    obstacle_tol = surface.obstacle_tol
    comp_tol = 10.0 * (tg.dt + sg.spacing ** 2) * norm
    gate(
        "obstacle_inequality",
        residuals.max_obstacle_violation <= obstacle_tol,
        {"value": residuals.max_obstacle_violation, "tol": obstacle_tol},
    )
    gate(
        "complementarity",
        residuals.complementarity_defect <= comp_tol,
        {"value": residuals.complementarity_defect, "tol": comp_tol},
    )

    if cfg.picard:
        t0 = time.perf_counter()
        iterates, converged = picard_solve(
            p, tg, sg, cfg.scheme, cfg.max_iters, cfg.tol, validate=False
        )
        tick("picard", t0)
        final = iterates[-1]
        agreement = float(np.max(np.abs(final.values - surface.values)))
        summary["picard"] = {
            "converged": converged,
            "iterations": len(iterates) - 1,
            "agreement_max_gap": agreement,
        }
        gate("picard_converged", converged, {"max_iters": cfg.max_iters, "tol": cfg.tol})
        gate(
            "picard_agreement",
            agreement <= max(cfg.tol * 10.0, 1e-6),
            {"value": agreement, "tol": max(cfg.tol * 10.0, 1e-6)},
        )

    if stages == "solve":
        summary["gates"] = gates
        result.exit_code = EXIT_OK if all(g["passed"] for g in gates) else EXIT_GATE
        if "surfaces" in cfg.artifacts:
            _surface_artifacts(result, surface)
        if "summary" in cfg.artifacts:
            result.artifacts["summary.json"] = summary_json(summary)
        return result

    t0 = time.perf_counter()
    policy = extract_policy(surface, p)
    ensemble = simulate_paths(p, tg, cfg.x0, cfg.n_paths, cfg.seed)
    executions = simulate_strategy(policy, ensemble, p, cfg.start_mode)
    est = estimate_value(executions)
    tail = switch_count_tail(executions, start_mode=cfg.start_mode)
    tick("simulate", t0)

    summary["monte_carlo"] = {
        "mean": est.mean,
        "std_error": est.std_error,
        "n_paths": est.n,
        "start_mode": cfg.start_mode,
        "seed": cfg.seed,
    }
    summary["switch_tail"] = [
        {"n": n + 1, "frequency": float(f)} for n, f in enumerate(tail.frequencies)
    ]

    v_root = root[str(cfg.start_mode)]
    mc_gap = abs(est.mean - v_root)
    mc_tol = 3.0 * est.std_error + cfg.mc_slack
    gate(
        "mc_pde_consistency",
        mc_gap <= mc_tol,
        {"mc_mean": est.mean, "pde_value": v_root, "gap": mc_gap, "tol": mc_tol},
    )

    summary["gates"] = gates
    summary["timings"] = timings       # volatile; stripped from summary.json
    result.exit_code = EXIT_OK if all(g["passed"] for g in gates) else EXIT_GATE

    if "surfaces" in cfg.artifacts:
        _surface_artifacts(result, surface)
    if "executions" in cfg.artifacts:
        result.artifacts["executions.csv"] = executions_to_csv(executions)
    if "tail" in cfg.artifacts:
        result.artifacts["tail.csv"] = tail_to_csv(tail)
    if "summary" in cfg.artifacts:
        result.artifacts["summary.json"] = summary_json(summary)
    return result


def _surface_artifacts(result: RunResult, surface) -> None:
    full = surface_to_csv(surface)
    lines = full.splitlines(keepends=True)
    header, rows = lines[0], lines[1:]
    per_mode: Dict[str, List[str]] = {}
    for row in rows:
        mode = row.split(",", 1)[0]
        per_mode.setdefault(mode, []).append(row)
    for mode, chunk in per_mode.items():
        result.artifacts[f"mode{mode}.csv"] = header + "".join(chunk)


def summary_json(summary: Dict[str, object]) -> str:
    """Canonical, deterministic serialization (timings excluded)."""
    clean = {k: v for k, v in summary.items() if k != "timings"}
    return json.dumps(clean, sort_keys=True, indent=2) + "\n"
