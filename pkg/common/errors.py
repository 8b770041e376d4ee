"""
Exception hierarchy shared by the library and the CLI.

Library code raises these; only the CLI maps them to exit codes.
"""
from typing import Iterable, Optional

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_AUDIT = 4


class BeamLabError(Exception):
    """Base class for every error raised by the laboratory"""

    exit_code = EXIT_INVALID


class ProblemValidationError(BeamLabError):
    """
    A problem statement failed parsing or a hypothesis check.

    Args:
        message: Summary line
        violations: Individual hypothesis failures, one per entry
    """

    def __init__(self, message: str, violations: Optional[Iterable[str]] = None):
        self.violations = list(violations or [])
        if self.violations:
            message = f"{message}: " + "; ".join(self.violations)
        super().__init__(message)


class CertificateError(BeamLabError):
    """The decay certificate cannot be issued for this problem or data"""


class ProvenanceError(BeamLabError):
    """Artifacts that must come from the same problem do not"""


class SolverError(BeamLabError):
    """
    A nonlinear or linear solve failed.

    Args:
        message: What failed
        step_index: Time step index when raised inside a simulation
        residual: Last residual norm seen, if any
        iterations: Newton iterations spent, if any
    """

    exit_code = EXIT_SOLVER

    def __init__(
        self,
        message: str,
        step_index: Optional[int] = None,
        residual: Optional[float] = None,
        iterations: Optional[int] = None,
    ):
        self.base_message = message
        self.step_index = step_index
        self.residual = residual
        self.iterations = iterations
        details = []
        if step_index is not None:
            details.append(f"step: {step_index}")
        if iterations is not None:
            details.append(f"iterations: {iterations}")
        if residual is not None:
            details.append(f"residual: {residual:.3e}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)

    def at_step(self, step_index: int) -> "SolverError":
        """Return a copy of this error tagged with the failing step index"""
        return type(self)(self.base_message, step_index=step_index, residual=self.residual, iterations=self.iterations)


class SingularSystemError(SolverError):
    """The banded factorization met a numerically singular pivot"""
