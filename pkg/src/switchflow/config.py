"""Flat key-value run configs with dotted sections.

Schema (defaults in brackets; coefficient values are the four numbers
"x, |x|, t, 1" of a*x + b*|x| + c*t + d):

    problem.mode_count   = 2                  # required, m >= 2
    problem.horizon      = 1.0                # required, T > 0
    problem.loop_floor   = 0.5                # [1e-6]
    problem.drift        = 1, 0, 0, 0         # required
    problem.volatility   = 1.41, 0, 0, 0      # required
    problem.payoff.I     = ...                # required for I = 1..m
    problem.cost.I.J     = ...                # required for all I != J; no diagonal keys
    grid.time_steps      = 100                # [100]
    grid.space_nodes     = 101                # [101]
    grid.x_min           = 0.01               # [auto: 4-sigma envelope around x0]
    grid.x_max           = 100.0              # [auto]
    grid.log_space       = auto               # [auto] | true | false
    scheme.kind          = implicit           # [implicit] | explicit
    scheme.picard        = false              # [false]
    scheme.tol           = 1e-8               # [1e-8]
    scheme.max_iters     = 50                 # [50]
    simulation.x0        = 1.0                # [1.0]
    simulation.start_mode= 1                  # [1]
    simulation.n_paths   = 10000              # [10000]
    simulation.seed      = 0                  # [0]
    gates.mc_slack       = 0.05               # [0.05]
    output.directory     = out                # [out]
    output.artifacts     = surfaces,executions,tail,summary   # [all]

Unknown keys are rejected by name (typo safety); '#' starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

from .errors import ConfigError
from .model import CoefficientFunction, SwitchingProblem

__all__ = ["RunConfig", "load_config", "parse_config_text", "ARTIFACT_NAMES"]

ARTIFACT_NAMES = ("surfaces", "executions", "tail", "summary")

_SCALAR_KEYS = {
    "problem.mode_count": ("int", True, None),
    "problem.horizon": ("float", True, None),
    "problem.loop_floor": ("float", False, 1e-6),
    "grid.time_steps": ("int", False, 100),
    "grid.space_nodes": ("int", False, 101),
    "grid.x_min": ("float", False, None),
    "grid.x_max": ("float", False, None),
    "grid.log_space": ("tristate", False, None),
    "scheme.kind": ("scheme", False, "implicit"),
    "scheme.picard": ("bool", False, False),
    "scheme.tol": ("float", False, 1e-8),
    "scheme.max_iters": ("int", False, 50),
    "simulation.x0": ("float", False, 1.0),
    "simulation.start_mode": ("int", False, 1),
    "simulation.n_paths": ("int", False, 10000),
    "simulation.seed": ("int", False, 0),
    "gates.mc_slack": ("float", False, 0.05),
    "output.directory": ("str", False, "out"),
    "output.artifacts": ("artifacts", False, ",".join(ARTIFACT_NAMES)),
}


@dataclass(frozen=True)
class RunConfig:
    problem: SwitchingProblem
    time_steps: int
    space_nodes: int
    x_min: Optional[float]
    x_max: Optional[float]
    log_space: Optional[bool]          # None = auto
    scheme: str
    picard: bool
    tol: float
    max_iters: int
    x0: float
    start_mode: int
    n_paths: int
    seed: int
    mc_slack: float
    out_dir: str
    artifacts: tuple
    echo: Dict[str, object] = field(default_factory=dict)

    _ECHO_KEYS = {
        "time_steps": "grid.time_steps",
        "space_nodes": "grid.space_nodes",
        "x_min": "grid.x_min",
        "x_max": "grid.x_max",
        "log_space": "grid.log_space",
        "scheme": "scheme.kind",
        "picard": "scheme.picard",
        "tol": "scheme.tol",
        "max_iters": "scheme.max_iters",
        "x0": "simulation.x0",
        "start_mode": "simulation.start_mode",
        "n_paths": "simulation.n_paths",
        "seed": "simulation.seed",
        "mc_slack": "gates.mc_slack",
        # out_dir is deliberately absent: the output location is operational
        # and must not break byte-identity of summaries across --out-dir.
    }

    def with_seed(self, seed: int) -> "RunConfig":
        return self.with_overrides(seed=int(seed))

    def with_overrides(self, **kw) -> "RunConfig":
        echo = dict(self.echo)
        for field_name, value in kw.items():
            key = self._ECHO_KEYS.get(field_name)
            if key is not None and key in echo:
                echo[key] = value
        if "artifacts" in kw and "output.artifacts" in echo:
            echo["output.artifacts"] = ",".join(kw["artifacts"])
        return RunConfig(**{**self.__dict__, **kw, "echo": echo})


def _parse_number(raw: str, kind: str, key: str, path, line):
    try:
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected {kind}, got {raw!r}", path, line)


def _parse_coef(raw: str, key: str, path, line) -> CoefficientFunction:
    parts = [s.strip() for s in raw.split(",")]
    if len(parts) != 4:
        raise ConfigError(
            f"key {key!r}: a coefficient needs exactly 4 comma-separated numbers "
            f"(x, |x|, t, const), got {raw!r}",
            path,
            line,
        )
    try:
        vals = [float(s) for s in parts]
    except ValueError:
        raise ConfigError(f"key {key!r}: non-numeric coefficient in {raw!r}", path, line)
    return CoefficientFunction(*vals)


def parse_config_text(text: str, path: Optional[str] = None) -> RunConfig:
    entries: Dict[str, tuple] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {rawline.strip()!r}", path, lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"empty key or value in {rawline.strip()!r}", path, lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first set on line {entries[key][1]})", path, lineno)
        entries[key] = (value, lineno)

    def take(key: str):
        return entries.pop(key, None)

    scalars: Dict[str, object] = {}
    for key, (kind, required, default) in _SCALAR_KEYS.items():
        got = take(key)
        if got is None:
            if required:
                raise ConfigError(f"missing required key {key!r}", path)
            scalars[key] = default
            continue
        raw, lineno = got
        if kind in ("int", "float"):
            scalars[key] = _parse_number(raw, kind, key, path, lineno)
        elif kind == "bool":
            if raw.lower() not in ("true", "false"):
                raise ConfigError(f"key {key!r}: expected true/false, got {raw!r}", path, lineno)
            scalars[key] = raw.lower() == "true"
        elif kind == "tristate":
            if raw.lower() not in ("true", "false", "auto"):
                raise ConfigError(f"key {key!r}: expected true/false/auto, got {raw!r}", path, lineno)
            scalars[key] = None if raw.lower() == "auto" else raw.lower() == "true"
        elif kind == "scheme":
            if raw not in ("implicit", "explicit"):
                raise ConfigError(f"key {key!r}: expected implicit/explicit, got {raw!r}", path, lineno)
            scalars[key] = raw
        elif kind == "artifacts":
            names = tuple(s.strip() for s in raw.split(",") if s.strip())
            bad = [n for n in names if n not in ARTIFACT_NAMES]
            if bad:
                raise ConfigError(
                    f"key {key!r}: unknown artifact name(s) {bad}; valid: {list(ARTIFACT_NAMES)}",
                    path,
                    lineno,
                )
            scalars[key] = ",".join(names)
        else:
            scalars[key] = raw

    m = int(scalars["problem.mode_count"])
    if m < 2:
        raise ConfigError(f"problem.mode_count must be >= 2, got {m}", path)

    drift_raw = take("problem.drift")
    vol_raw = take("problem.volatility")
    if drift_raw is None:
        raise ConfigError("missing required key 'problem.drift'", path)
    if vol_raw is None:
        raise ConfigError("missing required key 'problem.volatility'", path)
    drift = _parse_coef(drift_raw[0], "problem.drift", path, drift_raw[1])
    vol = _parse_coef(vol_raw[0], "problem.volatility", path, vol_raw[1])

    payoffs = []
    for i in range(1, m + 1):
        key = f"problem.payoff.{i}"
        got = take(key)
        if got is None:
            raise ConfigError(f"missing required key {key!r}", path)
        payoffs.append(_parse_coef(got[0], key, path, got[1]))

    zero = CoefficientFunction.zero()
    costs = [[zero for _ in range(m)] for _ in range(m)]
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            key = f"problem.cost.{i}.{j}"
            got = take(key)
            if i == j:
                if got is not None:
                    raise ConfigError(
                        f"key {key!r}: diagonal switching costs are identically zero; omit the key",
                        path,
                        got[1],
                    )
                continue
            if got is None:
                raise ConfigError(f"missing required key {key!r}", path)
            costs[i - 1][j - 1] = _parse_coef(got[0], key, path, got[1])

    if entries:
        key, (_, lineno) = next(iter(entries.items()))
        raise ConfigError(f"unknown key {key!r}", path, lineno)

    problem = SwitchingProblem(
        mode_count=m,
        payoffs=payoffs,
        costs=costs,
        drift=drift,
        volatility=vol,
        horizon=float(scalars["problem.horizon"]),
        loop_floor=float(scalars["problem.loop_floor"]),
    )

    def coef_echo(c: CoefficientFunction):
        return [c.x_coef, c.abs_x_coef, c.t_coef, c.const_term]

    echo: Dict[str, object] = {k: v for k, v in sorted(scalars.items())}
    echo["problem.drift"] = coef_echo(drift)
    echo["problem.volatility"] = coef_echo(vol)
    for i, f in enumerate(payoffs, start=1):
        echo[f"problem.payoff.{i}"] = coef_echo(f)
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            if i != j:
                echo[f"problem.cost.{i}.{j}"] = coef_echo(costs[i - 1][j - 1])

    start_mode = int(scalars["simulation.start_mode"])
    if start_mode < 1 or start_mode > m:
        raise ConfigError(f"simulation.start_mode must be in 1..{m}, got {start_mode}", path)

    if (scalars["grid.x_min"] is None) != (scalars["grid.x_max"] is None):
        raise ConfigError("grid.x_min and grid.x_max must be given together (or both omitted for auto)", path)

    return RunConfig(
        problem=problem,
        time_steps=int(scalars["grid.time_steps"]),
        space_nodes=int(scalars["grid.space_nodes"]),
        x_min=scalars["grid.x_min"],
        x_max=scalars["grid.x_max"],
        log_space=scalars["grid.log_space"],
        scheme=str(scalars["scheme.kind"]),
        picard=bool(scalars["scheme.picard"]),
        tol=float(scalars["scheme.tol"]),
        max_iters=int(scalars["scheme.max_iters"]),
        x0=float(scalars["simulation.x0"]),
        start_mode=start_mode,
        n_paths=int(scalars["simulation.n_paths"]),
        seed=int(scalars["simulation.seed"]),
        mc_slack=float(scalars["gates.mc_slack"]),
        out_dir=str(scalars["output.directory"]),
        artifacts=tuple(str(scalars["output.artifacts"]).split(",")),
        echo=echo,
    )


def load_config(path) -> RunConfig:
    """Parse a config file; every error carries file and line context."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path))
    return parse_config_text(text, str(path))
