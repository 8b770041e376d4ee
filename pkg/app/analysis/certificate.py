"""
Exponential decay certificate for G = 0, f = 0 and its audit against trajectories.

The perturbed energy H = E + eps (u, v) satisfies H' <= -eps E once
    gamma   = M^(m-2)                         (sup bound M from E(0))
    delta   = 1 / (4 a2 gamma B^2)
    c_delta = ((m-1)/m) (m delta)^(-1/(m-1))  (sharp Young constant)
    eps     = min(a1 / (a2 c_delta), a1 / (3/2 + a2^2 B^2), 1 / (2 B^2)),
which gives E(t) <= H(0) / (1 - eps B^2) * exp(-r t) with r = eps / (1 + eps B^2).

B here is B_cert = max(B, 1). |(u, v)_h| <= B E only yields |H - E| <= eps B^2 E when B >= 1,
and any larger Poincare constant stays valid.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.dynamics.integrator import Trajectory
from app.dynamics.lyapunov import EnergyRecord
from app.model.problem import ValidatedProblem
from app.numerics.nonlinearity import power_bound_constant
from app.numerics.operators import DiscreteConstants
from common.errors import CertificateError, ProvenanceError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 0.05
DEFAULT_ENERGY_SLACK = 1e-9


class TraceEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    value: float
    formula: str
    variant: str = Field("derived", description="derived, input or as-published")


class Certificate(BaseModel):
    """Constant chain of the decay estimate; trace lists every step in order"""

    model_config = ConfigDict(frozen=True)

    m: float
    a1: float
    a2: float
    E0: float
    B: float
    B_cert: float = Field(description="max(B, 1), the Poincare constant the chain runs on")
    k_inf: float
    M: float
    gamma: float
    delta: float
    c_delta: float
    eps: float
    r: float
    prefactor: float
    trace: List[TraceEntry] = Field(default_factory=list)
    problem_digest: str = ""

    def envelope(self, t, H0: float):
        """prefactor * H(0) * exp(-r t)"""
        return self.prefactor * H0 * np.exp(-self.r * np.asarray(t, dtype=float))


class CheckResult(BaseModel):
    name: str
    description: str
    passed: bool
    worst_margin: float
    first_violation_index: Optional[int] = None
    first_violation_time: Optional[float] = None


class AuditReport(BaseModel):
    tol: float
    passed: bool
    checks: List[CheckResult]

    def check(self, name: str) -> CheckResult:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)


def certificate_from_parameters(
    a1: float,
    a2: float,
    m: float,
    constants: DiscreteConstants,
    E0: float,
    problem_digest: str = "",
) -> Certificate:
    """
    Evaluate the constant chain for an envelope (a1, a2, m), discrete constants and E(0).

    Raises:
        CertificateError: E0 <= 0 or an envelope outside 0 < a1 <= a2, m >= 2
    """
    if not E0 > 0:
        raise CertificateError("E(0) = 0: decay is trivial")
    if not (0 < a1 <= a2) or m < 2:
        raise CertificateError(f"certificate needs 0 < a1 <= a2 and m >= 2 (a1 = {a1}, a2 = {a2}, m = {m})")

    trace: List[TraceEntry] = []

    def record(name, value, formula, variant="derived"):
        trace.append(TraceEntry(name=name, value=float(value), formula=formula, variant=variant))
        return float(value)

    record("a1", a1, "lower damping envelope", "input")
    record("a2", a2, "upper damping envelope", "input")
    record("m", m, "damping growth exponent", "input")
    record("E0", E0, "E(0) = 1/2 (v0, v0)_h + 1/2 (A u0, u0)_h", "input")
    record("B", constants.B, "1 / lambda_1, lambda_1 = 4 sin^2(pi h / 2L) / h^2", "input")
    record("k_inf", constants.k_inf, "sqrt(L) / 2 * sqrt(B)", "input")
    B = record("B_cert", max(constants.B, 1.0), "max(B, 1)")
    B2 = B * B

    M = record("M", constants.k_inf * math.sqrt(2.0 * E0), "k_inf * sqrt(2 E0)")
    bound = power_bound_constant(M, m)
    gamma = record("gamma", bound.gamma, "M^(m-2)")
    record("gamma_lipschitz", bound.gamma_lipschitz, "(m/2)^2 * M^(m-2)", "as-published")
    delta = record("delta", 1.0 / (4.0 * a2 * gamma * B2), "1 / (4 a2 gamma B_cert^2)")
    record("delta_threshold", B2 / (4.0 * a2 * gamma), "B_cert^2 / (4 a2 gamma)", "as-published")
    c_delta = record(
        "c_delta", ((m - 1.0) / m) * (m * delta) ** (-1.0 / (m - 1.0)), "((m-1)/m) * (m delta)^(-1/(m-1))"
    )
    absorption = record("absorption", 1.5 + a2 * a2 * B2, "3/2 + a2^2 B_cert^2")
    record("absorption_published", 1.5 + a2 * a2 * B, "3/2 + a2^2 B_cert", "as-published")
    eps_young = record("eps_young", a1 / (a2 * c_delta), "a1 / (a2 c_delta)")
    eps_absorb = record("eps_absorption", a1 / absorption, "a1 / (3/2 + a2^2 B_cert^2)")
    eps_cap = record("eps_cap", 1.0 / (2.0 * B2), "1 / (2 B_cert^2)")
    eps = record("eps", min(eps_young, eps_absorb, eps_cap), "min(eps_young, eps_absorption, eps_cap)")
    r = record("r", eps / (1.0 + eps * B2), "eps / (1 + eps B_cert^2)")
    prefactor = record("prefactor", 1.0 / (1.0 - eps * B2), "1 / (1 - eps B_cert^2)")

    return Certificate(
        m=m, a1=a1, a2=a2, E0=E0, B=constants.B, B_cert=B, k_inf=constants.k_inf, M=M, gamma=gamma, delta=delta,
        c_delta=c_delta, eps=eps, r=r, prefactor=prefactor, trace=trace, problem_digest=problem_digest,
    )


def compute_certificate(problem: ValidatedProblem, E0: float, constants: DiscreteConstants) -> Certificate:
    """
    Certificate for a validated problem.

    Raises:
        CertificateError: inadmissible problem (G or f nonzero) or E0 <= 0
    """
    if not problem.certificate_admissible:
        raise CertificateError("; ".join(problem.inadmissible_reasons) or "problem is not certificate-admissible")
    damping = problem.damping
    cert = certificate_from_parameters(
        damping.lower, damping.upper, damping.m, constants, E0, problem_digest=problem.digest
    )
    logger.info(f"Certificate issued | eps: {cert.eps:.6g} | r: {cert.r:.6g} | prefactor: {cert.prefactor:.6g}")
    return cert


def _check(name: str, description: str, margins: np.ndarray, times: np.ndarray, offset: int = 0) -> CheckResult:
    if margins.size == 0:
        return CheckResult(name=name, description=description, passed=True, worst_margin=0.0)
    worst = float(np.max(margins))
    violations = np.nonzero(margins > 0)[0]
    if violations.size == 0:
        return CheckResult(name=name, description=description, passed=True, worst_margin=worst)
    first = int(violations[0]) + offset
    return CheckResult(
        name=name,
        description=description,
        passed=False,
        worst_margin=worst,
        first_violation_index=first,
        first_violation_time=float(times[first]),
    )


def audit_records(
    records: Sequence[EnergyRecord],
    cert: Certificate,
    tol: float = DEFAULT_TOL,
    energy_slack: float = DEFAULT_ENERGY_SLACK,
) -> AuditReport:
    """
    Audit energy records against a certificate.

    Checks (margin > 0 marks a violation):
        envelope      E_n <= prefactor H_0 exp(-r t_n) (1 + tol)
        h_envelope    H_n <= H_0 exp(-r t_n) (1 + tol)
        differential  (H_n+1 - H_n) / dt <= -eps E_n+1/2 + tol E_0 r
        h_minus_e     |H_n - E_n| <= eps B_cert^2 E_n (1 + tol)
        sup_bound     sup|u_n| <= M (1 + tol)
        monotone      E_n+1 <= E_n + energy_slack
    """
    if tol < 0:
        raise ValueError(f"tol must be non-negative (tol = {tol})")
    t = np.array([rec.t for rec in records], dtype=float)
    E = np.array([rec.E for rec in records], dtype=float)
    H = np.array([rec.H for rec in records], dtype=float)
    sup = np.array([rec.sup_u for rec in records], dtype=float)
    if t.size == 0:
        raise ValueError("cannot audit an empty trajectory")

    E0, H0 = E[0], H[0]
    decay = np.exp(-cert.r * t)
    checks = [
        _check("envelope", "E(t) <= prefactor H(0) exp(-r t)", E - cert.prefactor * H0 * decay * (1 + tol), t),
        _check("h_envelope", "H(t) <= H(0) exp(-r t)", H - H0 * decay * (1 + tol), t),
    ]
    dts = np.diff(t)
    if np.any(dts <= 0):
        raise ValueError("record times must be strictly increasing")
    lhs = np.diff(H) / dts
    rhs = -cert.eps * 0.5 * (E[1:] + E[:-1]) + tol * E0 * cert.r
    checks.append(_check("differential", "H' <= -eps E", lhs - rhs, t, offset=1))
    coupling = np.abs(H - E) - cert.eps * cert.B_cert ** 2 * E * (1 + tol)
    checks.append(_check("h_minus_e", "|H - E| <= eps B_cert^2 E", coupling, t))
    checks.append(_check("sup_bound", "sup|u| <= M", sup - cert.M * (1 + tol), t))
    checks.append(_check("monotone", "E nonincreasing", np.diff(E) - energy_slack, t, offset=1))

    report = AuditReport(tol=tol, passed=all(item.passed for item in checks), checks=checks)
    failed = [item.name for item in checks if not item.passed]
    if failed:
        logger.warning(f"Audit failed | checks: {', '.join(failed)}")
    else:
        logger.info(f"Audit passed | records: {t.size} | tol: {tol}")
    return report


def verify_trajectory(
    traj: Trajectory,
    cert: Certificate,
    tol: float = DEFAULT_TOL,
    energy_slack: float = DEFAULT_ENERGY_SLACK,
) -> AuditReport:
    """
    Audit a trajectory against the certificate of the problem it was simulated from.

    Raises:
        ProvenanceError: trajectory and certificate come from different problems,
            or the trajectory's H column used another eps
    """
    if traj.problem_digest and cert.problem_digest and traj.problem_digest != cert.problem_digest:
        raise ProvenanceError("trajectory and certificate were produced from different problems")
    if traj.eps is not None and not math.isclose(traj.eps, cert.eps, rel_tol=1e-12, abs_tol=0.0):
        raise ProvenanceError(f"trajectory H column used eps = {traj.eps}, certificate has eps = {cert.eps}")
    return audit_records(traj.records, cert, tol=tol, energy_slack=energy_slack)


def report_lines(cert: Certificate) -> List[str]:
    """``name = value # formula`` per trace entry"""
    lines = []
    for entry in cert.trace:
        tag = "" if entry.variant == "derived" else f" [{entry.variant}]"
        lines.append(f"{entry.name} = {format(entry.value, '.17g')} # {entry.formula}{tag}")
    return lines


def csv_rows(cert: Certificate) -> List[List[str]]:
    return [[entry.name, format(entry.value, ".17g"), entry.formula] for entry in cert.trace]


def parse_report(text: str) -> Dict[str, float]:
    """Values of a ``name = value # formula`` report (or ``constant,value,formula`` CSV)"""
    values = {}
    lines = text.splitlines()
    if lines and lines[0].strip() == "constant,value,formula":
        for line in lines[1:]:
            if line.strip():
                name, value = line.split(",", 2)[:2]
                values[name.strip()] = float(value)
        return values
    for line in lines:
        body = line.split("#", 1)[0].strip()
        if not body or "=" not in body:
            continue
        name, value = body.split("=", 1)
        values[name.strip()] = float(value)
    return values


def certificate_from_report(text: str, problem_digest: str = "") -> Certificate:
    """
    Rebuild a Certificate from its text or CSV report.

    Raises:
        CertificateError: a required constant is missing
    """
    values = parse_report(text)
    required = (
        "m", "a1", "a2", "E0", "B", "B_cert", "k_inf", "M", "gamma", "delta", "c_delta", "eps", "r", "prefactor"
    )
    missing = [name for name in required if name not in values]
    if missing:
        raise CertificateError(f"certificate report lacks: {', '.join(missing)}")
    return Certificate(**{name: values[name] for name in required}, problem_digest=problem_digest)


def format_audit(report: AuditReport) -> str:
    """Plain-text audit report: verdict, then one block per check"""
    lines = [f"tol = {format(report.tol, '.17g')}", f"result = {'PASS' if report.passed else 'FAIL'}"]
    for item in report.checks:
        lines.append(f"[{item.name}] {'PASS' if item.passed else 'FAIL'} # {item.description}")
        lines.append(f"  worst_margin = {format(item.worst_margin, '.17g')}")
        if item.first_violation_index is not None:
            lines.append(f"  first_violation_index = {item.first_violation_index}")
            lines.append(f"  first_violation_time = {format(item.first_violation_time, '.17g')}")
    return "\n".join(lines) + "\n"
