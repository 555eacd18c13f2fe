"""Pydantic request/response models for the HTTP service.

RunRequest mirrors the config-file schema one-to-one, so a request built
from a parsed config produces byte-identical summaries whether it is
executed in process or through the service.
"""

from __future__ import annotations

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import ARTIFACT_NAMES, RunConfig
from ..model import CoefficientFunction, SwitchingProblem

__all__ = [
    "CoefficientSpec",
    "ProblemSpec",
    "GridSpec",
    "SchemeSpec",
    "SimulationSpec",
    "GatesSpec",
    "RunRequest",
    "RunResponse",
    "ValidationResponse",
    "HealthResponse",
    "request_from_config",
]


class CoefficientSpec(BaseModel):
    """a*x + b*|x| + c*t + d with fields (x, abs_x, t, const)."""

    model_config = ConfigDict(extra="forbid")

    x: float = 0.0
    abs_x: float = 0.0
    t: float = 0.0
    const: float = 0.0

    def to_coef(self) -> CoefficientFunction:
        return CoefficientFunction(self.x, self.abs_x, self.t, self.const)

    @classmethod
    def from_coef(cls, c: CoefficientFunction) -> "CoefficientSpec":
        return cls(x=c.x_coef, abs_x=c.abs_x_coef, t=c.t_coef, const=c.const_term)

    def as_list(self) -> List[float]:
        return [self.x, self.abs_x, self.t, self.const]


class ProblemSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode_count: int = Field(ge=2)
    horizon: float = Field(gt=0.0)
    loop_floor: float = Field(default=1e-6, gt=0.0)
    drift: CoefficientSpec
    volatility: CoefficientSpec
    payoffs: List[CoefficientSpec]
    costs: List[List[CoefficientSpec]]

    @model_validator(mode="after")
    def _shapes(self):
        m = self.mode_count
        if len(self.payoffs) != m:
            raise ValueError(f"expected {m} payoffs, got {len(self.payoffs)}")
        if len(self.costs) != m or any(len(r) != m for r in self.costs):
            raise ValueError(f"costs must be an {m}x{m} matrix")
        for i in range(m):
            d = self.costs[i][i]
            if (d.x, d.abs_x, d.t, d.const) != (0.0, 0.0, 0.0, 0.0):
                raise ValueError(f"diagonal cost [{i + 1}][{i + 1}] must be zero")
        return self

    def to_problem(self) -> SwitchingProblem:
        return SwitchingProblem(
            mode_count=self.mode_count,
            payoffs=[c.to_coef() for c in self.payoffs],
            costs=[[c.to_coef() for c in row] for row in self.costs],
            drift=self.drift.to_coef(),
            volatility=self.volatility.to_coef(),
            horizon=self.horizon,
            loop_floor=self.loop_floor,
        )


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    time_steps: int = Field(default=100, ge=1)
    space_nodes: int = Field(default=101, ge=3)
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    log_space: Optional[bool] = None     # None = auto

    @model_validator(mode="after")
    def _paired_bounds(self):
        if (self.x_min is None) != (self.x_max is None):
            raise ValueError("x_min and x_max must be given together (or both omitted for auto)")
        return self


class SchemeSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["implicit", "explicit"] = "implicit"
    picard: bool = False
    tol: float = Field(default=1e-8, gt=0.0)
    max_iters: int = Field(default=50, ge=1)


class SimulationSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x0: float = 1.0
    start_mode: int = Field(default=1, ge=1)
    n_paths: int = Field(default=10000, ge=2)
    seed: int = Field(default=0, ge=0)


class GatesSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mc_slack: float = Field(default=0.05, ge=0.0)


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSpec
    grid: GridSpec = GridSpec()
    scheme: SchemeSpec = SchemeSpec()
    simulation: SimulationSpec = SimulationSpec()
    gates: GatesSpec = GatesSpec()
    output_dir: str = "out"
    artifacts: List[str] = Field(default_factory=lambda: list(ARTIFACT_NAMES))
    include_artifacts: bool = True

    @model_validator(mode="after")
    def _check(self):
        if self.simulation.start_mode > self.problem.mode_count:
            raise ValueError("simulation.start_mode exceeds mode_count")
        bad = [a for a in self.artifacts if a not in ARTIFACT_NAMES]
        if bad:
            raise ValueError(f"unknown artifact name(s): {bad}")
        return self

    def to_config(self) -> RunConfig:
        problem = self.problem.to_problem()
        echo: Dict[str, object] = {
            "problem.mode_count": self.problem.mode_count,
            "problem.horizon": self.problem.horizon,
            "problem.loop_floor": self.problem.loop_floor,
            "grid.time_steps": self.grid.time_steps,
            "grid.space_nodes": self.grid.space_nodes,
            "grid.x_min": self.grid.x_min,
            "grid.x_max": self.grid.x_max,
            "grid.log_space": self.grid.log_space,
            "scheme.kind": self.scheme.kind,
            "scheme.picard": self.scheme.picard,
            "scheme.tol": self.scheme.tol,
            "scheme.max_iters": self.scheme.max_iters,
            "simulation.x0": self.simulation.x0,
            "simulation.start_mode": self.simulation.start_mode,
            "simulation.n_paths": self.simulation.n_paths,
            "simulation.seed": self.simulation.seed,
            "gates.mc_slack": self.gates.mc_slack,
            "output.directory": self.output_dir,
            "output.artifacts": ",".join(self.artifacts),
            "problem.drift": self.problem.drift.as_list(),
            "problem.volatility": self.problem.volatility.as_list(),
        }
        for i, c in enumerate(self.problem.payoffs, start=1):
            echo[f"problem.payoff.{i}"] = c.as_list()
        for i in range(self.problem.mode_count):
            for j in range(self.problem.mode_count):
                if i != j:
                    echo[f"problem.cost.{i + 1}.{j + 1}"] = self.problem.costs[i][j].as_list()
        return RunConfig(
            problem=problem,
            time_steps=self.grid.time_steps,
            space_nodes=self.grid.space_nodes,
            x_min=self.grid.x_min,
            x_max=self.grid.x_max,
            log_space=self.grid.log_space,
            scheme=self.scheme.kind,
            picard=self.scheme.picard,
            tol=self.scheme.tol,
            max_iters=self.scheme.max_iters,
            x0=self.simulation.x0,
            start_mode=self.simulation.start_mode,
            n_paths=self.simulation.n_paths,
            seed=self.simulation.seed,
            mc_slack=self.gates.mc_slack,
            out_dir=self.output_dir,
            artifacts=tuple(self.artifacts),
            echo=echo,
        )


class ViolationOut(BaseModel):
    rule: str
    modes: List[int]
    point: Dict[str, float]
    margin: float


class ValidationResponse(BaseModel):
    passed: bool
    certified: bool
    fatal: bool
    violations: List[ViolationOut]
    exit_code: int


class RunResponse(BaseModel):
    summary: Dict[str, object]
    artifacts: Dict[str, str] = {}
    exit_code: int


class HealthResponse(BaseModel):
    status: str
    version: str


def request_from_config(cfg: RunConfig) -> RunRequest:
    """Build the service request equivalent to a parsed config file."""
    p = cfg.problem
    m = p.mode_count
    spec = ProblemSpec(
        mode_count=m,
        horizon=p.horizon,
        loop_floor=p.loop_floor,
        drift=CoefficientSpec.from_coef(p.drift),
        volatility=CoefficientSpec.from_coef(p.volatility),
        payoffs=[CoefficientSpec.from_coef(f) for f in p.payoffs],
        costs=[[CoefficientSpec.from_coef(p.costs[i][j]) for j in range(m)] for i in range(m)],
    )
    return RunRequest(
        problem=spec,
        grid=GridSpec(
            time_steps=cfg.time_steps,
            space_nodes=cfg.space_nodes,
            x_min=cfg.x_min,
            x_max=cfg.x_max,
            log_space=cfg.log_space,
        ),
        scheme=SchemeSpec(kind=cfg.scheme, picard=cfg.picard, tol=cfg.tol, max_iters=cfg.max_iters),
        simulation=SimulationSpec(
            x0=cfg.x0, start_mode=cfg.start_mode, n_paths=cfg.n_paths, seed=cfg.seed
        ),
        gates=GatesSpec(mc_slack=cfg.mc_slack),
        # the output location is client-side: echo the config's directive, not
        # any --out-dir override, so summaries stay byte-identical either way
        output_dir=str(cfg.echo.get("output.directory", cfg.out_dir)),
        artifacts=list(cfg.artifacts),
    )
