"""Exception types; each maps to one CLI exit status."""


class VortexLabError(Exception):
    exit_code = 4


class ConfigError(VortexLabError, ValueError):
    """Invalid or incomplete scenario description."""
    exit_code = 2


class DomainError(VortexLabError, ValueError):
    """Argument outside the domain of a geometric map."""
    exit_code = 2


class ResolutionError(VortexLabError):
    """The requested run cannot be resolved with the configured grid."""
    exit_code = 3


class SolverError(VortexLabError, RuntimeError):
    """A solver failed: divergence, positivity loss, CFL violation, ..."""
    exit_code = 4


class ConvergenceError(SolverError):
    pass


class TraceError(SolverError):
    pass
