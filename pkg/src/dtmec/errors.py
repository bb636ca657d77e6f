"""Shared exception types."""


class InvalidParameterError(ValueError):
    """A parameter is outside its documented domain."""


class SolverFailureError(RuntimeError):
    """A linear system or iterative solver could not produce a valid answer."""


class NonConvergenceError(SolverFailureError):
    """An iterative solver hit its iteration cap without converging."""


class TrainingFailureError(RuntimeError):
    """The placement learner diverged (NaN cost or sustained blow-up)."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
