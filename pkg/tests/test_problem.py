import math

import numpy as np
import pytest

from app.model.problem import (
    SPOT_SAMPLE,
    DampingSpec,
    ForcingSpec,
    InitialData,
    RestoringSpec,
    SimConfig,
)
from app.numerics.nonlinearity import damping_eval, restoring_primitive
from common.errors import ProblemValidationError
from tests.conftest import build_problem


def test_canonical_linear_problem_is_certificate_admissible(linear_problem):
    assert linear_problem.certificate_admissible
    assert linear_problem.inadmissible_reasons == ()
    assert linear_problem.grid.size == 63
    assert linear_problem.grid.h * linear_problem.grid.N == pytest.approx(math.pi, rel=1e-15)


def test_m_below_two_is_rejected():
    with pytest.raises(ProblemValidationError, match="m out of range"):
        build_problem(m=1.5)


def test_odd_power_restoring_with_static_force_is_valid_but_not_certifiable(make_problem):
    problem = make_problem(
        restoring=RestoringSpec(kind="odd-power", lam=1.0, p=3),
        forcing=ForcingSpec(kind="static", values=np.ones(63)),
    )
    assert not problem.certificate_admissible
    assert "certificate requires G ≡ 0" in problem.inadmissible_reasons
    assert "certificate requires f ≡ 0" in problem.inadmissible_reasons


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"damping": DampingSpec(form="canonical", m=2, a=0.1, a1=0.2, a2=0.3)}, "outside"),
        ({"damping": DampingSpec(form="canonical", m=2, a=0.0)}, "a1 must be positive"),
        ({"N": 3}, "N >= 4"),
        ({"dt": -1e-3}, "dt must be positive"),
        ({"u0": np.full(63, np.inf)}, "u0 has non-finite entries"),
        ({"u1": np.zeros(10)}, "u1 has length 10"),
        ({"restoring": RestoringSpec(kind="odd-power", lam=1.0, p=2)}, "odd positive integer"),
        ({"restoring": RestoringSpec(kind="zero", D=-1.0)}, "G = 0 requires D = 0"),
    ],
)
def test_hypothesis_violations(kwargs, message):
    with pytest.raises(ProblemValidationError, match=message):
        build_problem(**kwargs)


def test_domain_must_be_ordered():
    with pytest.raises(ProblemValidationError, match="c < d"):
        build_problem(d=-1.0)


def test_violations_are_all_reported():
    with pytest.raises(ProblemValidationError) as err:
        build_problem(dt=-1.0, u1=np.zeros(5))
    assert len(err.value.violations) >= 2


def test_non_monotone_custom_damping_is_rejected():
    damping = DampingSpec(
        form="custom",
        m=2,
        a1=0.1,
        a2=10.0,
        function=lambda x: 0.5 * x + 0.3 * np.sin(5 * x),
        derivative=lambda x: 0.5 + 1.5 * np.cos(5 * x),
    )
    with pytest.raises(ProblemValidationError, match="nondecreasing|a1"):
        build_problem(damping=damping)


def test_composite_damping_within_envelope_is_accepted():
    damping = DampingSpec(form="composite", m=3, a1=0.1, a2=0.5, coefficients=[0.2, 0.3], powers=[1, 2])
    problem = build_problem(damping=damping)
    assert problem.certificate_admissible


def test_tabulated_damping_is_odd_and_validated():
    damping = DampingSpec(
        form="tabulated", m=2, a1=0.1, a2=1.0, table_x=[0.0, 1.0, 2.0], table_F=[0.0, 0.4, 1.0]
    )
    problem = build_problem(damping=damping)
    assert float(damping_eval(problem.damping, -1.0)) == pytest.approx(-0.4)
    with pytest.raises(ProblemValidationError, match="increasing x"):
        build_problem(
            damping=DampingSpec(form="tabulated", m=2, a1=0.1, a2=1.0, table_x=[0.5, 1.0], table_F=[0.0, 1.0])
        )


def test_canonical_sign_condition_on_sample():
    spec = DampingSpec(form="canonical", m=3.5, a=0.7)
    x = SPOT_SAMPLE
    F = damping_eval(spec, x)
    assert np.all(F * x >= 0.7 * (x ** 2 + np.abs(x) ** 3.5) * (1 - 1e-12))
    assert np.all(np.diff(F) >= 0)


def test_odd_power_primitive_is_non_negative():
    spec = RestoringSpec(kind="odd-power", lam=2.0, p=5)
    assert np.all(restoring_primitive(spec, SPOT_SAMPLE) >= 0)


def test_sealed_arrays_are_read_only(linear_problem):
    with pytest.raises(ValueError):
        linear_problem.init.u0[0] = 1.0


def test_digest_tracks_inputs(linear_problem):
    assert linear_problem.digest == build_problem().digest
    assert linear_problem.digest != build_problem(amp=2.0).digest
    assert linear_problem.digest != build_problem(dt=2e-3).digest


def test_replace_revalidates(linear_problem):
    changed = linear_problem.replace(cfg=SimConfig(dt=5e-4, T=1.0))
    assert changed.cfg.dt == 5e-4
    assert changed.digest != linear_problem.digest
    with pytest.raises(ProblemValidationError):
        linear_problem.replace(init=InitialData(u0=np.zeros(3), u1=np.zeros(63)))


def test_undamped_only_when_allowed():
    with pytest.raises(ProblemValidationError):
        build_problem(a=0.0)
    problem = build_problem(a=0.0, allow_undamped=True)
    assert not problem.certificate_admissible
    assert "certificate requires a1 > 0" in problem.inadmissible_reasons


def test_static_forcing_is_convergence_admissible(make_problem):
    problem = make_problem(forcing=ForcingSpec(kind="static", values=np.ones(63)))
    assert problem.convergence_admissible
    harmonic = make_problem(forcing=ForcingSpec(kind="time-dependent", values=np.ones(63), omega=2.0))
    assert not harmonic.convergence_admissible
    assert harmonic.forcing.at(math.pi / 2, 63) == pytest.approx(np.cos(math.pi) * np.ones(63))
