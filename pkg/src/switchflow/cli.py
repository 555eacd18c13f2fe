"""Command-line front end.

A thin client over the service layer: subcommands parse a config file,
build the same request model the HTTP endpoints accept, execute it (in
process by default, against a remote service with --server), and write the
returned artifacts to the output directory.

Exit codes: 0 all gates passed; 1 solver/module error; 2 structural
validation failed; 3 an invariant gate failed; 4 config error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, ProblemValidationError, SwitchflowError
from .runner import RunResult, run
from .service.schemas import RunResponse, request_from_config

_STAGE_ARTIFACTS = {
    "solve": ("surfaces", "summary"),
    "simulate": ("executions", "tail", "summary"),
    "run": None,
}


def _load(cfg_path: str, seed, out_dir) -> RunConfig:
    cfg = load_config(cfg_path)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    if out_dir is not None:
        cfg = cfg.with_overrides(out_dir=str(out_dir))
    return cfg


def _remote(server: str, endpoint: str, cfg: RunConfig) -> RunResult:
    import httpx

    req = request_from_config(cfg)
    resp = httpx.post(
        server.rstrip("/") + "/" + endpoint,
        json=req.model_dump(),
        timeout=600.0,
    )
    if resp.status_code != 200:
        raise SwitchflowError(f"server error {resp.status_code}: {resp.text}")
    body = RunResponse(**resp.json())
    return RunResult(summary=body.summary, artifacts=body.artifacts, exit_code=body.exit_code)


def _execute(cfg_path, stages, out_dir, seed, quiet, server) -> int:
    try:
        cfg = _load(cfg_path, seed, out_dir)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 4
    keep = _STAGE_ARTIFACTS.get(stages)
    if keep is not None:
        cfg = cfg.with_overrides(artifacts=tuple(a for a in cfg.artifacts if a in keep))
    progress = None if quiet else (lambda msg: click.echo(msg, err=True))
    try:
        if server:
            result = _remote(server, stages, cfg)
        else:
            result = run(cfg, stages=stages, progress=progress)
    except ProblemValidationError as exc:
        click.echo(f"validation error: {exc}", err=True)
        return 2
    except SwitchflowError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1

    out = Path(cfg.out_dir)
    if result.artifacts:
        out.mkdir(parents=True, exist_ok=True)
        for name, content in sorted(result.artifacts.items()):
            (out / name).write_text(content)
            if not quiet:
                click.echo(f"wrote {out / name}", err=True)
    if result.timings and result.artifacts:
        (out / "timings.json").write_text(json.dumps(result.timings, sort_keys=True, indent=2) + "\n")

    if not quiet:
        block = result.summary.get("validation", {})
        click.echo(f"validation: {'passed' if block.get('passed') else 'failed'}"
                   + ("" if block.get("certified", True) else " (sampled, not certified)"), err=True)
        for v in block.get("violations", []):
            click.echo(f"  {v['rule']} modes={v['modes']} margin={v['margin']:g}", err=True)
        for g in result.summary.get("gates", []):
            click.echo(f"gate {g['name']}: {'pass' if g['passed'] else 'FAIL'}", err=True)
    return result.exit_code


_common = [
    click.option("--out-dir", default=None, help="Override output.directory."),
    click.option("--seed", default=None, type=int, help="Override simulation.seed."),
    click.option("--quiet", is_flag=True, help="Suppress progress and gate lines."),
    click.option("--server", default=None, help="Execute against a running service, e.g. http://localhost:8000."),
]


def _with_common(f):
    for opt in reversed(_common):
        f = opt(f)
    return f


@click.group()
@click.version_option(__version__)
def main():
    """Finite-horizon optimal multi-mode switching solver."""


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@_with_common
def validate(config, out_dir, seed, quiet, server):
    """Check the structural cost assumptions of a problem config."""
    sys.exit(_execute(config, "validate", out_dir, seed, quiet, server))


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@_with_common
def solve(config, out_dir, seed, quiet, server):
    """Solve the obstacle system and write per-mode surface CSVs."""
    sys.exit(_execute(config, "solve", out_dir, seed, quiet, server))


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@_with_common
def simulate(config, out_dir, seed, quiet, server):
    """Solve, extract the policy, and evaluate it on simulated paths."""
    sys.exit(_execute(config, "simulate", out_dir, seed, quiet, server))


@main.command(name="run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@_with_common
def run_cmd(config, out_dir, seed, quiet, server):
    """Full pipeline: validate, solve, simulate, report."""
    sys.exit(_execute(config, "run", out_dir, seed, quiet, server))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
