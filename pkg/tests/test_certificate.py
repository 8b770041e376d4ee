import dataclasses
import math

import numpy as np
import pytest

from app.analysis.certificate import (
    audit_records,
    certificate_from_parameters,
    certificate_from_report,
    compute_certificate,
    csv_rows,
    format_audit,
    parse_report,
    report_lines,
    verify_trajectory,
)
from app.dynamics.integrator import initial_state, simulate
from app.dynamics.lyapunov import EnergyRecord, energy
from app.model.problem import ForcingSpec, RestoringSpec, sine_profile
from app.numerics.operators import DiscreteConstants, discrete_constants
from common.artifacts import write_csv
from common.errors import CertificateError, ProvenanceError

UNIT = DiscreteConstants(B=1.0, k_inf=1.0, mu1=1.0)


def test_linear_worked_example():
    """m = 2, a = 0.1, B = 1: Young's constraint is slack, absorption binds"""
    cert = certificate_from_parameters(0.1, 0.1, 2, UNIT, E0=0.5)
    assert cert.M == pytest.approx(1.0)
    assert cert.gamma == 1.0
    assert cert.delta == pytest.approx(2.5)
    assert cert.c_delta == pytest.approx(0.1)
    assert cert.eps == pytest.approx(0.1 / 1.51, rel=1e-12)
    assert cert.eps == pytest.approx(0.0662252, rel=1e-6)
    assert cert.r == pytest.approx(0.0621118, rel=1e-5)
    assert cert.prefactor == pytest.approx(1.0 / (1.0 - 0.1 / 1.51), rel=1e-12)


def test_larger_damping_worked_example():
    cert = certificate_from_parameters(0.2, 0.2, 2, UNIT, E0=0.5)
    assert cert.eps == pytest.approx(0.2 / 1.54, rel=1e-12)
    assert cert.r == pytest.approx(0.11494, rel=1e-4)


def test_trace_lists_the_chain_in_order():
    cert = certificate_from_parameters(0.1, 0.1, 3, UNIT, E0=2.0)
    names = [entry.name for entry in cert.trace]
    assert names[:6] == ["a1", "a2", "m", "E0", "B", "k_inf"]
    assert names.index("k_inf") < names.index("B_cert") < names.index("M")
    assert names.index("M") < names.index("gamma") < names.index("delta") < names.index("c_delta")
    assert names.index("eps") < names.index("r") < names.index("prefactor")
    variants = {entry.name: entry.variant for entry in cert.trace}
    assert variants["gamma_lipschitz"] == "as-published"
    assert variants["absorption_published"] == "as-published"
    assert variants["eps"] == "derived"
    assert variants["E0"] == "input"


def test_chain_is_sound_on_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        a1 = rng.uniform(0.01, 2.0)
        a2 = a1 * rng.uniform(1.0, 5.0)
        m = rng.uniform(2.0, 6.0)
        B = rng.uniform(0.2, 3.0)
        constants = DiscreteConstants(B=B, k_inf=rng.uniform(0.3, 2.0), mu1=B ** -2)
        cert = certificate_from_parameters(a1, a2, m, constants, E0=rng.uniform(0.01, 10.0))
        Bc = max(B, 1.0)
        assert cert.B == B
        assert cert.B_cert == Bc
        assert cert.eps > 0
        assert cert.eps * Bc * Bc <= 0.5 * (1 + 1e-12)
        # |H - E| <= eps B E must sit inside the certified eps B_cert^2 E
        assert cert.eps * B <= cert.eps * Bc * Bc
        assert 1.0 / (1.0 - cert.eps * B) <= cert.prefactor * (1 + 1e-12)
        assert cert.r <= cert.eps / (1.0 + cert.eps * B) * (1 + 1e-12)
        assert a1 - cert.eps * (1.5 + a2 * a2 * Bc * Bc) >= -1e-12
        assert a1 - cert.eps * a2 * cert.c_delta >= -1e-12
        assert 0 < cert.r < cert.eps
        assert 1 < cert.prefactor <= 2 * (1 + 1e-12)
        assert cert.gamma == pytest.approx(cert.M ** (m - 2))


@pytest.mark.parametrize("m", [2.0, 2.5, 3.0, 4.0, 5.5])
def test_sharp_young_inequality(m):
    """x y <= delta x^m + c_delta y^(m/(m-1)) with equality at the optimum"""
    rng = np.random.default_rng(int(m * 10))
    conj = m / (m - 1)
    for delta in (0.05, 1.0, 7.0):
        c_delta = ((m - 1) / m) * (m * delta) ** (-1 / (m - 1))
        x, y = rng.uniform(0, 5, (2, 1000))
        assert np.all(x * y <= delta * x ** m + c_delta * y ** conj + 1e-12)
        x_star = (y / (m * delta)) ** (1 / (m - 1))
        np.testing.assert_allclose(x_star * y, delta * x_star ** m + c_delta * y ** conj, rtol=1e-10)


def test_rate_decreases_with_poincare_constant():
    def rate(B):
        return certificate_from_parameters(0.3, 0.6, 3, DiscreteConstants(B=B, k_inf=1.0, mu1=B ** -2), E0=1.0).r

    rates = [rate(B) for B in (1.0, 1.5, 2.0, 3.0)]
    assert all(later < earlier for earlier, later in zip(rates, rates[1:]))
    assert rate(0.2) == rate(0.5) == rate(1.0)


@pytest.mark.parametrize(
    "a1, a2, m, E0, message",
    [
        (0.1, 0.1, 2, 0.0, "E\\(0\\) = 0"),
        (0.3, 0.1, 2, 1.0, "0 < a1 <= a2"),
        (0.1, 0.1, 1.5, 1.0, "m >= 2"),
    ],
)
def test_certificate_errors(a1, a2, m, E0, message):
    with pytest.raises(CertificateError, match=message):
        certificate_from_parameters(a1, a2, m, UNIT, E0)


@pytest.mark.parametrize("m, a, expected", [(4, 0.05, 0.0322), (4, 0.5, 0.2222), (2, 0.5, 0.2222), (3, 0.05, 0.0322)])
def test_certified_rate_on_grid(make_problem, m, a, expected):
    problem = make_problem(m=m, a=a)
    cert = compute_certificate(problem, energy_of(problem), discrete_constants(problem.grid))
    assert cert.r == pytest.approx(expected, rel=0.02)
    assert cert.problem_digest == problem.digest


def test_inadmissible_problems_are_refused(make_problem):
    grid = make_problem().grid
    forced = make_problem(forcing=ForcingSpec(kind="static", values=np.ones(grid.size)))
    with pytest.raises(CertificateError, match="f ≡ 0"):
        compute_certificate(forced, 1.0, discrete_constants(grid))
    restored = make_problem(restoring=RestoringSpec(kind="odd-power", lam=1.0, p=3))
    with pytest.raises(CertificateError, match="G ≡ 0"):
        compute_certificate(restored, 1.0, discrete_constants(grid))


def energy_of(problem):
    return energy(initial_state(problem), problem.operator)


def certified_run(problem):
    cert = compute_certificate(problem, energy_of(problem), discrete_constants(problem.grid))
    return cert, simulate(problem, eps=cert.eps)


def test_text_report_roundtrip(linear_problem):
    cert = compute_certificate(linear_problem, energy_of(linear_problem), discrete_constants(linear_problem.grid))
    text = "\n".join(report_lines(cert)) + "\n"
    assert "eps = " in text
    assert "[as-published]" in text
    rebuilt = certificate_from_report(text, problem_digest=cert.problem_digest)
    assert rebuilt.eps == cert.eps
    assert rebuilt.r == cert.r
    assert rebuilt.prefactor == cert.prefactor
    assert rebuilt.B_cert == cert.B_cert


def test_csv_report_roundtrip(tmp_path):
    cert = certificate_from_parameters(0.1, 0.2, 3, UNIT, E0=0.7)
    path = write_csv(tmp_path / "certificate.csv", ("constant", "value", "formula"), csv_rows(cert))
    values = parse_report(path.read_text(encoding="utf-8"))
    assert values["eps"] == cert.eps
    assert values["c_delta"] == cert.c_delta


def test_report_missing_constants():
    with pytest.raises(CertificateError, match="lacks"):
        certificate_from_report("eps = 0.1 # eps\n")


def test_zero_trajectory_passes_every_check():
    cert = certificate_from_parameters(0.1, 0.1, 2, UNIT, E0=1.0)
    records = [EnergyRecord(t=0.1 * i, E=0.0, H=0.0, dissipation=0.0, l2_u=0.0, h2star_u=0.0, l2_v=0.0, sup_u=0.0)
               for i in range(20)]
    report = audit_records(records, cert)
    assert report.passed
    assert [item.name for item in report.checks] == [
        "envelope", "h_envelope", "differential", "h_minus_e", "sup_bound", "monotone"
    ]


def test_linear_trajectory_passes(make_problem):
    cert, traj = certified_run(make_problem(a=0.1, T=10.0, output_stride=10))
    report = verify_trajectory(traj, cert)
    assert report.passed, format_audit(report)
    assert report.check("envelope").worst_margin < 0
    assert "result = PASS" in format_audit(report)


def test_short_beam_with_aligned_data_passes(make_problem):
    """L = 1 gives B < 1; u1 = lambda_1 u0 makes |(u, v)_h| = B E exactly"""
    grid = make_problem(N=32, d=1.0).grid
    constants = discrete_constants(grid)
    mode = sine_profile(grid)
    problem = make_problem(N=32, d=1.0, a=0.1, u0=mode, u1=mode / constants.B, T=5.0, output_stride=10)
    cert, traj = certified_run(problem)
    assert cert.B == pytest.approx(0.1014, rel=1e-3)
    assert cert.B_cert == 1.0
    first = traj.records[0]
    coupling = abs(first.H - first.E) / first.E
    assert coupling == pytest.approx(cert.eps * cert.B, rel=1e-9)
    assert coupling > cert.eps * cert.B ** 2
    report = verify_trajectory(traj, cert)
    assert report.passed, format_audit(report)
    assert report.check("h_minus_e").worst_margin < 0


def corrupt(records, rate):
    return [dataclasses.replace(rec, E=rec.E * math.exp(rate * rec.t)) for rec in records]


def test_growing_energy_breaks_envelope(make_problem):
    cert, traj = certified_run(make_problem(a=0.1, T=10.0, output_stride=10))
    report = audit_records(corrupt(traj.records, 0.3), cert)
    envelope = report.check("envelope")
    assert not report.passed
    assert not envelope.passed
    assert 0 < envelope.first_violation_time < 2.0
    text = format_audit(report)
    assert "result = FAIL" in text
    assert "first_violation_time" in text


def test_slow_growth_breaks_monotonicity_only_early(make_problem):
    cert, traj = certified_run(make_problem(a=0.1, T=10.0, output_stride=10))
    report = audit_records(corrupt(traj.records, 0.01), cert)
    assert report.check("envelope").passed
    assert not report.check("monotone").passed
    assert not report.passed


def test_audit_rejects_bad_input():
    cert = certificate_from_parameters(0.1, 0.1, 2, UNIT, E0=1.0)
    record = EnergyRecord(t=0.0, E=1.0, H=1.0, dissipation=0.0, l2_u=1.0, h2star_u=1.0, l2_v=0.0, sup_u=1.0)
    with pytest.raises(ValueError):
        audit_records([], cert)
    with pytest.raises(ValueError):
        audit_records([record, record], cert)
    with pytest.raises(ValueError):
        audit_records([record], cert, tol=-0.1)


def test_provenance_mismatches(make_problem):
    cert, traj = certified_run(make_problem(a=0.1, T=0.05))
    other = compute_certificate(
        make_problem(a=0.2), energy_of(make_problem(a=0.2)), discrete_constants(make_problem().grid)
    )
    with pytest.raises(ProvenanceError, match="different problems"):
        verify_trajectory(traj, other)
    traj.eps = cert.eps * 1.5
    with pytest.raises(ProvenanceError, match="eps"):
        verify_trajectory(traj, cert)
