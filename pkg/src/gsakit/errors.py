"""Exception hierarchy.

Each class carries the CLI exit code it maps to.
"""


class GsaError(Exception):
    exit_code = 1


class ConfigError(GsaError, ValueError):
    """Invalid settings, budgets or input-space definitions."""

    exit_code = 2


class RegistryError(ConfigError, KeyError):
    """Unknown builtin model name."""

    def __str__(self):
        return Exception.__str__(self)


class ConstructionError(ConfigError):
    """A design (conference matrix, DSD) cannot be built for the request."""


class EvaluationError(GsaError, RuntimeError):
    """A model evaluation failed.

    ``row`` is the index of the offending design row when known and
    ``completed`` the number of rows evaluated successfully before failure.
    """

    exit_code = 3

    def __init__(self, message, row=None, completed=None):
        super().__init__(message)
        self.row = row
        self.completed = completed


class GivenDataError(EvaluationError):
    """A fixed data table was asked for new evaluations."""


class MethodPreconditionError(GsaError):
    """The chosen method's assumptions do not hold (e.g. dependent inputs)."""

    exit_code = 4


class FitError(MethodPreconditionError):
    pass
