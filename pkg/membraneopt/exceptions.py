"""
Exception classes for the membrane-opt toolkit.
"""

from typing import Optional, Sequence


class MembraneOptError(Exception):
    """Base exception for all membrane-opt errors."""

    pass


class ConfigError(MembraneOptError):
    """Raised when a run configuration is invalid or incomplete."""

    pass


class DomainConstructionError(MembraneOptError):
    """Raised when a domain specification yields no interior cells."""

    pass


class DomainMismatchError(MembraneOptError):
    """Raised when fields or cell sets living on different domains are combined."""

    pass


class PreconditionError(MembraneOptError, ValueError):
    """Raised when an operation is called with arguments outside its contract."""

    pass


class SolverError(MembraneOptError):
    """
    Raised when the state equation could not be solved to the requested tolerance.

    Carries the last relative residual so callers can decide whether the
    result is still usable.
    """

    def __init__(
        self,
        residual: float,
        iterations: int,
        tolerance: float,
        message: Optional[str] = None,
    ):
        """
        Initialize SolverError.

        Args:
            residual: Relative residual ||b - Ku|| / ||b|| reached
            iterations: Iterations performed before giving up
            tolerance: Requested relative residual
            message: Optional custom error message
        """
        self.residual = residual
        self.iterations = iterations
        self.tolerance = tolerance

        if message is None:
            message = (
                f"Solver did not converge: residual {residual:.3e} > tolerance "
                f"{tolerance:.3e} after {iterations} iterations."
            )

        super().__init__(message)


class OptimizerError(MembraneOptError):
    """Raised when an optimization run stopped without converging."""

    def __init__(self, iterations: int, stop_reason: str, message: Optional[str] = None):
        self.iterations = iterations
        self.stop_reason = stop_reason

        if message is None:
            message = f"Optimizer stopped ({stop_reason}) after {iterations} iterations."

        super().__init__(message)


class TheoremCheckFailed(MembraneOptError):
    """Raised when one or more theorem checks of a sweep or oracle run failed."""

    def __init__(self, failed: Sequence[str], message: Optional[str] = None):
        self.failed = list(failed)

        if message is None:
            message = f"Theorem checks failed: {', '.join(self.failed)}"

        super().__init__(message)
