"""
Stationary problem A u + G(u) = f and convergence of the dynamics to it.

Residuals are evaluated in extended precision (numpy.longdouble) and the
Newton corrections come from float64 banded solves. At N = 64 the float64
round-off of A u alone is close to 1e-10, so a plain float64 loop stalls
right at the default tolerance.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.analysis.certificate import AuditReport, Certificate, audit_records, compute_certificate
from app.dynamics.integrator import Trajectory, initial_state
from app.dynamics.lyapunov import DecayFit, EnergyRecord, energy_record, fit_decay_rate
from app.model.problem import ForcingSpec, InitialData, ValidatedProblem
from app.numerics.banded import band_matvec, banded_solve, with_diagonal
from app.numerics.nonlinearity import restoring_derivative, restoring_eval
from app.numerics.operators import BandedOperator, discrete_constants, inner, quadratic_form
from common.errors import ProblemValidationError, ProvenanceError, SolverError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_ITERATIONS = 25


@dataclass(frozen=True)
class StationarySolution:
    """
    u_hat is kept in extended precision; residual_history[0] belongs to the
    initial guess.
    """

    u_hat: np.ndarray
    residual_norm: float
    newton_iterations: int
    residual_history: List[float] = field(default_factory=list)
    problem_digest: str = ""

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.u_hat, dtype=float)


@dataclass
class ConvergenceReport:
    times: np.ndarray
    h2star_diff: np.ndarray
    l2_v: np.ndarray
    audit: Optional[AuditReport] = None
    fit_h2star: Optional[DecayFit] = None
    fit_v: Optional[DecayFit] = None
    r_certified: Optional[float] = None

    @property
    def passed(self) -> bool:
        if self.audit is None or not self.audit.passed:
            return False
        return all(
            fit is not None and fit.rate >= self.r_certified for fit in (self.fit_h2star, self.fit_v)
        )

    def rows(self):
        return zip(self.times, self.h2star_diff, self.l2_v)


def static_forcing(problem: ValidatedProblem) -> np.ndarray:
    """
    Raises:
        ProblemValidationError: forcing depends on time
    """
    forcing = problem.forcing
    if forcing.kind == "time-dependent":
        raise ProblemValidationError("stationary problem needs zero or static forcing")
    return forcing.at(0.0, problem.grid.size)


def stationary_residual(problem: ValidatedProblem, u) -> np.ndarray:
    """A u + G(u) - f in extended precision"""
    u = np.asarray(u, dtype=np.longdouble)
    f = np.asarray(static_forcing(problem), dtype=np.longdouble)
    residual = band_matvec(problem.operator.ab, u) - f
    if problem.restoring.kind != "zero":
        residual = residual + np.asarray(restoring_eval(problem.restoring, u), dtype=np.longdouble)
    return residual


def residual_norm(problem: ValidatedProblem, u) -> float:
    """Discrete l2 norm of the stationary residual"""
    r = stationary_residual(problem, u)
    return math.sqrt(float(problem.operator.h * np.sum(r * r)))


def solve_stationary(
    problem: ValidatedProblem,
    tol: float = DEFAULT_TOL,
    initial_guess: Optional[np.ndarray] = None,
    max_iter: int = MAX_ITERATIONS,
) -> StationarySolution:
    """
    Newton iteration on R(u) = A u + G(u) - f with Jacobian A + diag(G'(u)).

    Args:
        problem: Validated problem with zero or static forcing
        tol: Target for the discrete l2 residual
        initial_guess: Starting iterate; A^-1 f (one banded solve) when omitted
        max_iter: Newton iteration cap

    Returns:
        StationarySolution

    Raises:
        ProblemValidationError: time-dependent forcing
        SolverError: no convergence within max_iter, or a singular Jacobian
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive (tol = {tol})")
    op = problem.operator
    f = static_forcing(problem)
    has_g = problem.restoring.kind != "zero"

    if initial_guess is None:
        u = np.asarray(banded_solve(op.ab, f), dtype=np.longdouble)
    else:
        u = np.array(initial_guess, dtype=np.longdouble)
        if u.shape != (op.size,):
            raise ValueError(f"initial guess has shape {u.shape}, expected ({op.size},)")

    history = []
    iterations = 0
    while True:
        r = stationary_residual(problem, u)
        norm = math.sqrt(float(op.h * np.sum(r * r)))
        history.append(norm)
        logger.debug(f"Stationary Newton | iteration: {iterations} | residual: {norm:.3e}")
        if not math.isfinite(norm):
            raise SolverError("non-finite stationary residual", residual=norm, iterations=iterations)
        if norm < tol:
            break
        if iterations >= max_iter:
            raise SolverError("stationary Newton did not converge", residual=norm, iterations=iterations)
        if has_g:
            jac = with_diagonal(op.ab, 1.0, restoring_derivative(problem.restoring, np.asarray(u, dtype=float)))
        else:
            jac = op.ab
        u = u - np.asarray(banded_solve(jac, np.asarray(r, dtype=float)), dtype=np.longdouble)
        iterations += 1

    logger.info(f"Stationary solve finished | iterations: {iterations} | residual: {norm:.3e}")
    return StationarySolution(
        u_hat=u, residual_norm=norm, newton_iterations=iterations, residual_history=history,
        problem_digest=problem.digest,
    )


def shifted_problem(problem: ValidatedProblem, solution: StationarySolution) -> ValidatedProblem:
    """
    Problem for w = u - u_hat: same damping, f = 0, initial data (u0 - u_hat, u1).

    For G = 0 the shift is exact: w'' + A w + F(w') = 0.

    Raises:
        ProblemValidationError: G is not identically zero
    """
    if problem.restoring.kind != "zero":
        raise ProblemValidationError("shift to the stationary solution needs G ≡ 0")
    u0 = np.asarray(problem.init.u0, dtype=float) - solution.values
    return problem.replace(init=InitialData(u0=u0, u1=np.array(problem.init.u1)), forcing=ForcingSpec())


def shifted_certificate(problem: ValidatedProblem, solution: StationarySolution) -> Certificate:
    """
    Certificate of the shifted problem, with E_w(0) from the shifted initial data.

    Raises:
        CertificateError: the shifted problem starts at rest (E_w(0) = 0)
    """
    shifted = shifted_problem(problem, solution)
    state = initial_state(shifted)
    E0 = 0.5 * inner(state.v, state.v, shifted.operator.h) + 0.5 * quadratic_form(shifted.operator, state.u)
    return compute_certificate(shifted, E0, discrete_constants(shifted.grid))


def check_convergence(
    traj: Trajectory,
    solution: StationarySolution,
    cert: Optional[Certificate],
    op: BandedOperator,
    problem: Optional[ValidatedProblem] = None,
    tol: float = 0.05,
) -> ConvergenceReport:
    """
    Series |u(t_n) - u_hat|_H2* and |v(t_n)|_2 along a trajectory, audited against
    the certificate of the shifted problem and fitted for tail decay rates.

    Args:
        traj: Trajectory of the problem u_hat solves (static f, G = 0)
        solution: Stationary solution of that problem
        cert: Shifted-problem certificate; None skips the audit and the fits
        op: Operator of the problem
        problem: Supplies the damping law for the shifted dissipation column
        tol: Relative audit tolerance

    Raises:
        ProvenanceError: trajectory and stationary solution belong to different problems
    """
    if traj.problem_digest and solution.problem_digest and traj.problem_digest != solution.problem_digest:
        raise ProvenanceError("trajectory and stationary solution come from different problems")
    u_hat = solution.values
    if u_hat.shape != (op.size,):
        raise ProvenanceError(f"stationary solution has {u_hat.size} nodes, operator has {op.size}")
    if problem is not None and problem.restoring.kind != "zero":
        raise ProblemValidationError("convergence check needs G ≡ 0")

    h = op.h
    times = np.array([state.t for state in traj.states], dtype=float)
    h2star = np.empty(times.size)
    l2_v = np.empty(times.size)
    shifted_records: List[EnergyRecord] = []
    for i, state in enumerate(traj.states):
        w = state.u - u_hat
        h2star[i] = math.sqrt(quadratic_form(op, w))
        l2_v[i] = math.sqrt(inner(state.v, state.v, h))
        if cert is not None and problem is not None:
            shifted_state = type(state)(t=state.t, u=w, v=state.v)
            shifted_records.append(energy_record(shifted_state, op, problem.damping, cert.eps))

    report = ConvergenceReport(times=times, h2star_diff=h2star, l2_v=l2_v)
    if cert is None:
        return report

    if shifted_records:
        report.audit = audit_records(shifted_records, cert, tol=tol)
    report.r_certified = cert.r
    report.fit_h2star = fit_decay_rate(times, h2star, envelope=True)
    report.fit_v = fit_decay_rate(times, l2_v, envelope=True)
    logger.info(
        f"Convergence check | r certified: {cert.r:.4g} | H2* rate: {report.fit_h2star.rate:.4g} | "
        f"velocity rate: {report.fit_v.rate:.4g}"
    )
    return report
