"""Exception types shared across the package."""


class SwitchflowError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SwitchflowError):
    """Config file could not be parsed or failed schema checks."""

    def __init__(self, message, path=None, line=None):
        ctx = ""
        if path is not None:
            ctx = f"{path}: " if line is None else f"{path}:{line}: "
        super().__init__(ctx + message)
        self.path = path
        self.line = line


class ProblemValidationError(SwitchflowError):
    """A problem failed structural validation where a validated one is required."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SimulationError(SwitchflowError):
    """Path simulation produced a non-finite state."""


class LatticeError(SwitchflowError):
    """Markov-chain lattice construction failed (probabilities or size)."""


class CflError(SwitchflowError):
    """Explicit time step violates the stability bound."""

    def __init__(self, message, dt_limit=None):
        super().__init__(message)
        self.dt_limit = dt_limit


class GuardError(SwitchflowError):
    """A resource guard was exceeded (oracle state space too large)."""


class SchemeInvariantError(SwitchflowError):
    """A numerical-scheme invariant that should hold by construction was violated."""
