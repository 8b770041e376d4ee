"""
Implicit midpoint integration of u'' + A u + F(u') + G(u) = f.

Each step solves for the midpoint velocity w,

    w = v + dt/2 * (-A(u + dt/2 w) - F(w) - G(u + dt/2 w) + f(t + dt/2)),

by Newton over pentadiagonal systems, then sets u+ = u + dt w, v+ = 2w - v.
For G = 0 this reproduces E(n+1) - E(n) = -dt (F(w), w)_h + dt (f, w)_h
up to the Newton residual.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.dynamics.lyapunov import EnergyRecord, energy, energy_record
from app.model.problem import SimConfig, ValidatedProblem
from app.numerics.banded import banded_solve, with_diagonal
from app.numerics.nonlinearity import (
    damping_derivative,
    damping_eval,
    restoring_derivative,
    restoring_eval,
)
from app.numerics.operators import apply, inner
from common.errors import SolverError

logger = logging.getLogger(__name__)

MAX_BACKTRACKS = 8


@dataclass(frozen=True)
class State:
    t: float
    u: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class StepInfo:
    w: np.ndarray
    iterations: int
    residual: float
    dissipation: float
    work: float


@dataclass
class Trajectory:
    """
    States and records at output strides plus per-step solver logs.

    step_energy has one more entry than the other step arrays (it starts at t = 0).
    """

    dt: float
    states: List[State] = field(default_factory=list)
    records: List[EnergyRecord] = field(default_factory=list)
    step_times: Optional[np.ndarray] = None
    step_sizes: Optional[np.ndarray] = None
    step_energy: Optional[np.ndarray] = None
    step_dissipation: Optional[np.ndarray] = None
    step_work: Optional[np.ndarray] = None
    newton_iterations: Optional[np.ndarray] = None
    newton_residuals: Optional[np.ndarray] = None
    eps: Optional[float] = None
    problem_digest: str = ""
    wall_seconds: float = 0.0

    @property
    def steps(self) -> int:
        return 0 if self.step_times is None else int(self.step_times.size)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records], dtype=float)


def initial_state(problem: ValidatedProblem) -> State:
    return State(t=0.0, u=np.array(problem.init.u0, dtype=float), v=np.array(problem.init.u1, dtype=float))


def _midpoint_velocity(state: State, problem: ValidatedProblem, dt: float) -> StepInfo:
    op = problem.operator
    h = op.h
    damping = problem.damping
    restoring = problem.restoring
    has_g = restoring.kind != "zero"
    tol = problem.cfg.newton_tol
    half = 0.5 * dt
    f_mid = problem.forcing.at(state.t + half, op.size)
    Au = apply(op, state.u)

    def residual(w):
        u_mid = state.u + half * w
        force = Au + half * apply(op, w) + damping_eval(damping, w) - f_mid
        if has_g:
            force = force + restoring_eval(restoring, u_mid)
        return w - state.v + half * force

    def l2(r):
        return math.sqrt(h * float(np.dot(r, r)))

    w = state.v.copy()
    r = residual(w)
    norm = l2(r)
    iterations = 0
    while norm >= tol:
        if iterations >= problem.cfg.newton_max_iter:
            raise SolverError("Newton did not converge", residual=norm, iterations=iterations)
        diagonal = 1.0 + half * damping_derivative(damping, w)
        if has_g:
            diagonal = diagonal + half * half * restoring_derivative(restoring, state.u + half * w)
        delta = banded_solve(with_diagonal(op.ab, half * half, diagonal), r)
        iterations += 1

        step = 1.0
        for _ in range(MAX_BACKTRACKS):
            trial = w - step * delta
            r_trial = residual(trial)
            norm_trial = l2(r_trial)
            if norm_trial < norm or not math.isfinite(norm_trial):
                break
            step *= 0.5
        w, r, norm = trial, r_trial, norm_trial
        if not math.isfinite(norm):
            raise SolverError("non-finite Newton iterate", residual=norm, iterations=iterations)

    work = inner(f_mid, w, h) if problem.forcing.kind != "zero" else 0.0
    return StepInfo(
        w=w,
        iterations=iterations,
        residual=norm,
        dissipation=inner(damping_eval(damping, w), w, h),
        work=work,
    )


def _advance(state: State, problem: ValidatedProblem, dt: float, t_next: Optional[float] = None):
    info = _midpoint_velocity(state, problem, dt)
    u_next = state.u + dt * info.w
    v_next = 2.0 * info.w - state.v
    if not (np.all(np.isfinite(u_next)) and np.all(np.isfinite(v_next))):
        raise SolverError("non-finite state", residual=info.residual, iterations=info.iterations)
    return State(t=state.t + dt if t_next is None else t_next, u=u_next, v=v_next), info


def step(state: State, problem: ValidatedProblem, dt: float) -> State:
    """
    One implicit midpoint step.

    Raises:
        SolverError: Newton failed within newton_max_iter, or values went non-finite
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive (dt = {dt})")
    return _advance(state, problem, dt)[0]


def simulate(
    problem: ValidatedProblem,
    cfg: Optional[SimConfig] = None,
    eps: Optional[float] = None,
) -> Trajectory:
    """
    Integrate from t = 0 to T, recording every output_stride steps (and the last step).

    The final step is shortened so the run ends exactly at T.

    Args:
        problem: Validated problem; its cfg is used unless cfg is given
        cfg: Time stepping controls overriding problem.cfg
        eps: Certificate perturbation size for the H column (H = E when None)

    Returns:
        Trajectory

    Raises:
        SolverError: tagged with the failing step index
    """
    cfg = cfg or problem.cfg
    if cfg is not problem.cfg:
        problem = problem.replace(cfg=cfg)
    op = problem.operator
    dt = cfg.dt
    n_steps = max(1, cfg.steps)
    stride = cfg.output_stride

    traj = Trajectory(dt=dt, eps=eps, problem_digest=problem.digest)
    traj.step_times = np.empty(n_steps)
    traj.step_sizes = np.array([cfg.step_size(n) for n in range(n_steps)])
    traj.step_energy = np.empty(n_steps + 1)
    traj.step_dissipation = np.empty(n_steps)
    traj.step_work = np.empty(n_steps)
    traj.newton_iterations = np.empty(n_steps, dtype=int)
    traj.newton_residuals = np.empty(n_steps)

    state = initial_state(problem)
    traj.states.append(state)
    traj.records.append(energy_record(state, op, problem.damping, eps))
    traj.step_energy[0] = traj.records[0].E

    logger.info(f"Simulation started | N: {problem.grid.N} | dt: {dt:g} | steps: {n_steps} | stride: {stride}")
    started = time.perf_counter()
    for n in range(n_steps):
        try:
            t_next = cfg.T if n + 1 == n_steps else (n + 1) * dt
            state, info = _advance(state, problem, float(traj.step_sizes[n]), t_next=t_next)
        except SolverError as e:
            logger.error(f"Simulation failed at step {n}: {e}")
            raise e.at_step(n)
        traj.step_times[n] = state.t
        traj.step_energy[n + 1] = energy(state, op)
        traj.step_dissipation[n] = info.dissipation
        traj.step_work[n] = info.work
        traj.newton_iterations[n] = info.iterations
        traj.newton_residuals[n] = info.residual
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            traj.states.append(state)
            traj.records.append(energy_record(state, op, problem.damping, eps, info.iterations))

    traj.wall_seconds = time.perf_counter() - started
    if problem.restoring.kind != "zero":
        budget = traj.step_sizes * (traj.step_dissipation - traj.step_work)
        defect = np.max(np.abs(np.diff(traj.step_energy) + budget))
        logger.warning(f"E excludes the primitive of G | max energy identity defect: {defect:.3e}")
    E0 = traj.step_energy[0]
    ratio = traj.step_energy[-1] / E0 if E0 > 0 else float("nan")
    logger.info(
        f"Simulation finished | steps: {n_steps} | E(T)/E(0): {ratio:.3e} | "
        f"max Newton iterations: {int(traj.newton_iterations.max())} | time: {traj.wall_seconds:.2f}s"
    )
    return traj
