"""
Closed-form solution of the linear semi-discrete problem (m = 2, G = 0,
zero or static forcing), used as the time-integration oracle.

With m = 2 the canonical law is F(x) = 2a x, so each sine mode obeys
q'' + 2a q' + mu_k q = f_k with mu_k the discrete biharmonic eigenvalue.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.dynamics.integrator import State, Trajectory
from app.model.problem import ForcingSpec, Grid, InitialData, ValidatedProblem
from app.numerics.operators import biharmonic_eigenvalues, dst, idst, norms
from common.errors import ProblemValidationError

logger = logging.getLogger(__name__)

CRITICAL_RTOL = 1e-12


@dataclass(frozen=True)
class ModeData:
    k: int
    mu: float
    alpha: float
    regime: str
    omega: Optional[float]


@dataclass(frozen=True)
class OracleComparison:
    max_l2_error: float
    max_h2star_error: float
    observed_dt_order: Optional[float] = None
    half_step_l2_error: Optional[float] = None


def regimes(a: float, mu):
    """Boolean masks (under, critical, over) for each mu"""
    mu = np.asarray(mu, dtype=float)
    disc = a * a - mu
    critical = (disc == 0.0) | (np.abs(disc) <= CRITICAL_RTOL * np.maximum(a * a, mu))
    return (disc < 0) & ~critical, critical, (disc > 0) & ~critical


def classify(a: float, mu: float) -> str:
    under, critical, _ = regimes(a, mu)
    if bool(critical):
        return "critical"
    return "under" if bool(under) else "over"


def propagate(y0, y1, a: float, mu, t: float):
    """
    Exact solution of y'' + 2a y' + mu y = 0 with y(0) = y0, y'(0) = y1,
    vectorized over modes.

    Returns:
        tuple: (y(t), y'(t))
    """
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    mu = np.asarray(mu, dtype=float)
    under, critical, over = regimes(a, mu)
    root = np.sqrt(np.where(critical, 1.0, np.abs(a * a - mu)))
    decay = math.exp(-a * t)

    # under-damped: root is the oscillation frequency
    c, s = np.cos(root * t), np.sin(root * t)
    y_under = decay * (y0 * c + (y1 + a * y0) / root * s)
    v_under = decay * (y1 * c - (a * y1 + mu * y0) / root * s)

    slope = y1 + a * y0
    y_crit = decay * (y0 + slope * t)
    v_crit = decay * (y1 - a * slope * t)

    # over-damped: root is kappa, exponents -a +/- kappa
    s_plus, s_minus = -a + root, -a - root
    c_plus = (y1 - s_minus * y0) / (2.0 * root)
    c_minus = y0 - c_plus
    e_plus = np.exp(np.where(over, s_plus, 0.0) * t)
    e_minus = np.exp(np.where(over, s_minus, 0.0) * t)
    y_over = c_plus * e_plus + c_minus * e_minus
    v_over = s_plus * c_plus * e_plus + s_minus * c_minus * e_minus

    y = np.select([under, critical], [y_under, y_crit], y_over)
    ydot = np.select([under, critical], [v_under, v_crit], v_over)
    if y.ndim == 0:
        return float(y), float(ydot)
    return y, ydot


@dataclass(frozen=True)
class ModalSolution:
    """Per-mode data, initial modal coefficients and static forcing coefficients"""

    grid: Grid
    a: float
    modes: List[ModeData]
    q0: np.ndarray
    q1: np.ndarray
    fk: np.ndarray

    def coefficients(self, t: float):
        mu = np.array([mode.mu for mode in self.modes])
        particular = self.fk / mu
        y, ydot = propagate(self.q0 - particular, self.q1, self.a, mu, t)
        return y + particular, ydot

    def state(self, t: float) -> State:
        q, qdot = self.coefficients(t)
        return State(t=float(t), u=idst(q), v=idst(qdot))


def build_modal_solution(init: InitialData, a: float, grid: Grid, f: ForcingSpec) -> ModalSolution:
    """
    Raises:
        ProblemValidationError: time-dependent forcing
    """
    if f.kind == "time-dependent":
        raise ProblemValidationError("modal oracle needs zero or static forcing")
    mu = biharmonic_eigenvalues(grid)
    modes = []
    for k, mu_k in enumerate(mu, start=1):
        regime = classify(a, float(mu_k))
        omega = math.sqrt(mu_k - a * a) if regime == "under" else None
        modes.append(ModeData(k=k, mu=float(mu_k), alpha=a, regime=regime, omega=omega))
    fk = dst(f.values) if f.kind == "static" else np.zeros(grid.size)
    return ModalSolution(grid=grid, a=a, modes=modes, q0=dst(init.u0), q1=dst(init.u1), fk=fk)


def modal_solution(init: InitialData, a: float, grid: Grid, f: ForcingSpec, t: float) -> State:
    """Exact semi-discrete state at time t"""
    return build_modal_solution(init, a, grid, f).state(t)


def require_linear(problem: ValidatedProblem) -> float:
    """
    Return the oracle coefficient a, or raise for problems the oracle cannot solve.
    """
    damping = problem.damping
    if damping.form != "canonical" or damping.m != 2:
        raise ProblemValidationError("modal oracle needs canonical damping with m = 2")
    if problem.restoring.kind != "zero":
        raise ProblemValidationError("modal oracle needs G ≡ 0")
    if problem.forcing.kind == "time-dependent":
        raise ProblemValidationError("modal oracle needs zero or static forcing")
    return float(damping.a)


def _max_errors(traj: Trajectory, solution: ModalSolution, problem: ValidatedProblem):
    max_l2 = 0.0
    max_h2 = 0.0
    for state in traj.states:
        exact = solution.state(state.t)
        diff = norms(state.u - exact.u, problem.grid, problem.operator)
        max_l2 = max(max_l2, diff.l2)
        max_h2 = max(max_h2, diff.h2star)
    return max_l2, max_h2


def oracle_compare(
    traj: Trajectory,
    problem: ValidatedProblem,
    traj_half: Optional[Trajectory] = None,
) -> OracleComparison:
    """
    Error norms of a simulated trajectory against the modal solution at its record times.

    Args:
        traj: Trajectory simulated with step dt
        problem: The linear problem both trajectories were simulated from
        traj_half: Optional trajectory of the same problem with step dt/2;
            gives the observed order log2(err(dt) / err(dt/2))
    """
    a = require_linear(problem)
    solution = build_modal_solution(problem.init, a, problem.grid, problem.forcing)
    max_l2, max_h2 = _max_errors(traj, solution, problem)
    order = None
    half_l2 = None
    if traj_half is not None:
        half_l2, _ = _max_errors(traj_half, solution, problem)
        if half_l2 > 0 and max_l2 > 0:
            order = math.log2(max_l2 / half_l2)
    logger.info(f"Oracle comparison | max l2 error: {max_l2:.3e} | max H2* error: {max_h2:.3e} | order: {order}")
    return OracleComparison(
        max_l2_error=max_l2, max_h2star_error=max_h2, observed_dt_order=order, half_step_l2_error=half_l2
    )
