"""Exception types shared across the package.

The CLI maps these onto exit codes: parameter/schema problems are exit 2,
numeric failures (fits, degenerate statistics) exit 3, I/O errors exit 4.
"""


class DlczError(Exception):
    """Base class for all package errors."""


class ParameterError(DlczError, ValueError):
    """A physical parameter or option is outside its valid domain."""


class ConfigError(ParameterError):
    """A configuration file is malformed or contains unknown/invalid keys."""


class SchemaError(DlczError, ValueError):
    """A data file does not match the expected column schema."""


class InsufficientDataError(DlczError, ValueError):
    """An estimator received counts that cannot support the estimate."""


class DegenerateDataError(DlczError, ValueError):
    """Input samples are degenerate (e.g. all storage times identical)."""


class FitConvergenceError(DlczError, RuntimeError):
    """The minimizer exhausted its iteration budget without converging."""


class DegenerateStatisticsError(DlczError, RuntimeError):
    """Too many bootstrap replicas failed to produce an estimate."""
