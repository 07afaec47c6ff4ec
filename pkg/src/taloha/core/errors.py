"""Exception hierarchy shared by the analysis, simulation and CLI layers."""

from typing import Any


class TalohaError(Exception):
    """Base class for all errors raised by taloha."""


class DomainError(TalohaError, ValueError):
    """A parameter lies outside the domain an operation supports.

    The message names the violated constraint, e.g. ``"gamma < n+1"``.
    """


class IndeterminateRegimeError(DomainError):
    """The integral test cannot decide between the two peaks."""

    def __init__(self, message: str, integral_value: float) -> None:
        super().__init__(message)
        self.integral_value = integral_value


class StateSpaceTooLargeError(DomainError):
    """The enumeration oracle would exceed its configured state budget."""


class BudgetExceededError(DomainError):
    """A simulation run would exceed its configured work budget."""


class ConvergenceError(TalohaError, RuntimeError):
    """An iterative method stopped without meeting its tolerance."""

    def __init__(self, message: str, residue: float, best: Any = None) -> None:
        super().__init__(f"{message} (residue={residue:.3e})")
        self.residue = residue
        self.best = best


class QuadratureError(ConvergenceError):
    """Adaptive quadrature did not reach its error tolerance."""
