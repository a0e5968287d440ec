"""Radially symmetric compressible flow with a vortex sheet: inviscid front,
viscous layers, composite approximations and their vanishing-viscosity checks."""

__version__ = "0.1.0"

from .errors import (ConfigError, ConvergenceError, DomainError, ResolutionError,  # noqa: E402
                     SolverError, TraceError, VortexLabError)
from .scenario import ScenarioConfig, default_config, load_config  # noqa: E402

__all__ = ["ConfigError", "ConvergenceError", "DomainError", "ResolutionError", "SolverError",
           "TraceError", "VortexLabError", "ScenarioConfig", "default_config", "load_config",
           "__version__"]
