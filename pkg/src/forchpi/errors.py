"""Exception hierarchy shared by the solvers and the command line."""


class ForchError(Exception):
    """Base class for all package errors."""


class ConfigError(ForchError, ValueError):
    """Invalid geometry, scenario or parameter combination."""


class DomainError(ForchError, ValueError):
    """Argument outside the domain of a mathematical function."""


class DegenerateDataError(ForchError):
    """Data for which a requested quantity is undefined (e.g. zero drawdown)."""


class QuadratureError(ForchError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SolverError(ForchError):
    """Nonlinear or time-stepping solver failure.

    ``history`` carries the residual history of the failing iteration and
    ``step`` the time-step index when the failure happened inside a run.
    """

    def __init__(self, message, history=None, step=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
        self.step = step


class ExpressionError(ForchError, ValueError):
    """Parse or evaluation failure of a boundary-program expression."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position
