import math

import numpy as np
import pytest

from app.analysis.modal_oracle import build_modal_solution
import app.dynamics.integrator as integrator
from app.dynamics.integrator import State, initial_state, simulate, step
from app.dynamics.lyapunov import energy
from app.model.problem import ForcingSpec, SimConfig, sine_profile
from app.numerics.operators import norms
from common.errors import SolverError


def test_zero_state_is_a_fixed_point(linear_problem):
    zero = np.zeros(linear_problem.grid.size)
    nxt = step(State(0.0, zero, zero), linear_problem, 1e-3)
    assert np.all(nxt.u == 0) and np.all(nxt.v == 0)
    assert nxt.t == pytest.approx(1e-3)


def test_one_step_matches_modal_propagator(linear_problem):
    dt = 1e-3
    nxt = step(initial_state(linear_problem), linear_problem, dt)
    solution = build_modal_solution(linear_problem.init, 0.1, linear_problem.grid, linear_problem.forcing)
    exact = solution.state(dt)
    assert norms(nxt.u - exact.u, linear_problem.grid, linear_problem.operator).l2 < 1e-8
    assert np.max(np.abs(nxt.v - exact.v)) < 1e-8


def test_step_rejects_non_positive_dt(linear_problem):
    with pytest.raises(ValueError):
        step(initial_state(linear_problem), linear_problem, 0.0)


@pytest.mark.parametrize("m, a", [(2, 0.1), (3, 0.5), (4, 0.05), (2.5, 1.0)])
def test_discrete_energy_identity(make_problem, m, a):
    """E_n+1 - E_n = -dt (F(w), w)_h up to the Newton tolerance"""
    problem = make_problem(m=m, a=a, T=0.5, u1=2.0 * sine_profile(make_problem().grid, 2))
    traj = simulate(problem)
    tol = 10 * problem.cfg.newton_tol
    defect = np.diff(traj.step_energy) + traj.step_sizes * traj.step_dissipation
    assert np.max(np.abs(defect)) <= tol
    assert np.all(np.diff(traj.step_energy) <= tol)


def test_undamped_energy_is_conserved(make_problem):
    problem = make_problem(a=0.0, allow_undamped=True, T=1.0)
    traj = simulate(problem)
    assert np.max(np.abs(np.diff(traj.step_energy))) <= 10 * problem.cfg.newton_tol
    assert np.all(traj.step_dissipation == 0)


def test_forcing_work_balances_energy(make_problem):
    grid = make_problem().grid
    profile = sine_profile(grid, 1, 0.5)
    for forcing in (
        ForcingSpec(kind="static", values=profile),
        ForcingSpec(kind="time-dependent", values=profile, omega=1.3, phase=0.2),
    ):
        problem = make_problem(m=3, a=0.2, T=0.5, forcing=forcing)
        traj = simulate(problem)
        defect = np.diff(traj.step_energy) + traj.step_sizes * (traj.step_dissipation - traj.step_work)
        assert np.max(np.abs(defect)) <= 10 * problem.cfg.newton_tol
        assert np.any(traj.step_work != 0)


def test_nonlinear_restoring_runs(make_problem):
    from app.model.problem import RestoringSpec

    problem = make_problem(restoring=RestoringSpec(kind="odd-power", lam=1.0, p=3), T=0.2, amp=2.0)
    traj = simulate(problem)
    assert traj.steps == 200
    assert np.all(np.isfinite(traj.step_energy))


def test_single_step_trajectory_has_two_records(make_problem):
    problem = make_problem(dt=1e-3, T=1e-3)
    traj = simulate(problem)
    assert len(traj.records) == 2
    assert traj.records[-1].t == pytest.approx(1e-3)
    assert traj.problem_digest == problem.digest


def test_output_stride(make_problem):
    traj = simulate(make_problem(dt=1e-3, T=0.1, output_stride=10))
    assert len(traj.records) == 11
    np.testing.assert_allclose(traj.column("t"), np.linspace(0, 0.1, 11), atol=1e-12)
    assert traj.step_energy.size == traj.steps + 1


def test_cfg_override_and_eps_column(linear_problem):
    traj = simulate(linear_problem, cfg=SimConfig(dt=2e-3, T=0.02), eps=0.05)
    assert traj.steps == 10
    assert traj.eps == 0.05
    assert traj.records[1].H != traj.records[1].E


def test_newton_failure_reports_step(make_problem):
    grid = make_problem().grid
    problem = make_problem(m=4, a=1.0, amp=5.0, u1=sine_profile(grid, 1, 10.0), T=0.01)
    problem = problem.replace(cfg=SimConfig(dt=1e-2, T=0.05, newton_max_iter=1))
    with pytest.raises(SolverError) as err:
        simulate(problem)
    assert err.value.step_index == 0
    assert "step: 0" in str(err.value)


def test_energy_matches_modal_solution(make_problem):
    """E(20)/E(0) follows the exact modal energy, e^(-4) up to the O(a/omega) oscillation"""
    problem = make_problem(a=0.1, T=20.0, output_stride=1000)
    traj = simulate(problem)
    solution = build_modal_solution(problem.init, 0.1, problem.grid, problem.forcing)
    exact = energy(solution.state(20.0), problem.operator)
    assert traj.records[-1].E == pytest.approx(exact, rel=1e-5)
    ratio = traj.records[-1].E / traj.records[0].E
    assert ratio == pytest.approx(math.exp(-4.0), rel=0.15)


def test_step_count_covers_the_horizon():
    assert SimConfig(dt=1e-3, T=1.0).steps == 1000
    assert SimConfig(dt=0.3, T=1.0).steps == 4
    cfg = SimConfig(dt=0.3, T=1.0)
    assert [cfg.step_size(n) for n in range(3)] == [0.3, 0.3, 0.3]
    assert cfg.step_size(3) == pytest.approx(0.1)


def test_final_step_is_shortened_to_reach_T(make_problem):
    problem = make_problem(dt=0.03, T=0.1)
    traj = simulate(problem)
    assert traj.steps == 4
    assert traj.records[-1].t == 0.1
    assert traj.step_times[-1] == 0.1
    np.testing.assert_allclose(traj.step_sizes, [0.03, 0.03, 0.03, 0.01], rtol=1e-12)
    defect = np.diff(traj.step_energy) + traj.step_sizes * traj.step_dissipation
    assert np.max(np.abs(defect)) <= 10 * problem.cfg.newton_tol
    solution = build_modal_solution(problem.init, 0.1, problem.grid, problem.forcing)
    exact = solution.state(0.1)
    assert norms(traj.states[-1].u - exact.u, problem.grid, problem.operator).l2 < 1e-4


def test_non_finite_trial_fails_without_backtracking(linear_problem, monkeypatch):
    calls = []
    original = integrator.damping_eval

    def failing(damping, x):
        calls.append(1)
        if len(calls) > 1:
            return np.full_like(x, np.nan)
        return original(damping, x)

    monkeypatch.setattr(integrator, "damping_eval", failing)
    with pytest.raises(SolverError, match="non-finite"):
        step(initial_state(linear_problem), linear_problem, 1e-3)
    assert len(calls) == 2
