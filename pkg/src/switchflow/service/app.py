"""FastAPI wrapper around the solver pipeline.

Stateless: every endpoint takes a full problem description and returns the
summary plus requested artifacts inline. Domain outcomes (validation
failures, gate failures) are ordinary 200 responses carrying the exit code;
malformed requests and solver errors map to HTTP 400/422.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import SwitchflowError
from ..runner import run
from .schemas import (
    HealthResponse,
    RunRequest,
    RunResponse,
    ValidationResponse,
    ViolationOut,
)

__all__ = ["app", "create_app"]

_STAGE_ARTIFACTS = {
    "solve": ("surfaces", "summary"),
    "simulate": ("executions", "tail", "summary"),
    "run": None,  # as requested
}


def _execute(req: RunRequest, stages: str) -> RunResponse:
    cfg = req.to_config()
    keep = _STAGE_ARTIFACTS.get(stages)
    if keep is not None:
        cfg = cfg.with_overrides(artifacts=tuple(a for a in cfg.artifacts if a in keep))
    try:
        result = run(cfg, stages=stages)
    except SwitchflowError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    artifacts = result.artifacts if req.include_artifacts else {}
    return RunResponse(summary=result.summary, artifacts=artifacts, exit_code=result.exit_code)


def create_app() -> FastAPI:
    app = FastAPI(title="switchflow", version=__version__)

    @app.exception_handler(SwitchflowError)
    async def _domain_error(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/validate", response_model=ValidationResponse)
    def validate(req: RunRequest):
        cfg = req.to_config()
        try:
            result = run(cfg, stages="validate")
        except SwitchflowError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        block = result.summary["validation"]
        return ValidationResponse(
            passed=block["passed"],
            certified=block["certified"],
            fatal=block["fatal"],
            violations=[ViolationOut(**v) for v in block["violations"]],
            exit_code=result.exit_code,
        )

    @app.post("/solve", response_model=RunResponse)
    def solve(req: RunRequest):
        return _execute(req, "solve")

    @app.post("/simulate", response_model=RunResponse)
    def simulate(req: RunRequest):
        return _execute(req, "simulate")

    @app.post("/run", response_model=RunResponse)
    def run_endpoint(req: RunRequest):
        return _execute(req, "run")

    return app


app = create_app()
