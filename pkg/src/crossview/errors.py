"""Exception hierarchy shared by all modules.

Exit codes used by the CLI: 2 validation, 3 degenerate math, 4 IO.
"""


class CrossviewError(Exception):
    exit_code = 1


class ValidationError(CrossviewError):
    """Invalid input values, shapes, or configuration."""

    exit_code = 2


class StructuralError(ValidationError):
    """Missing views, disconnected graphs, mismatched lists."""


class ConfigurationError(ValidationError):
    """Bad parameter values (non-positive scales, empty ranges)."""


class DegenerateInputError(CrossviewError):
    """Mathematically degenerate input (zero variance, collinear points)."""

    exit_code = 3


class IOFailure(CrossviewError):
    exit_code = 4
