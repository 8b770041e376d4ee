"""
Problem statement of the damped beam: domain, grid, damping/restoring/forcing
descriptors, initial data and the validation gate that seals them together.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from common.errors import ProblemValidationError

logger = logging.getLogger(__name__)

# Sign-symmetric, log-spaced sample used for every pointwise hypothesis check
_MAGNITUDES = np.logspace(-6.0, 2.0, 81)
SPOT_SAMPLE = np.concatenate((-_MAGNITUDES[::-1], [0.0], _MAGNITUDES))

_SPOT_RTOL = 1e-12
STEP_COUNT_SLACK = 1e-9


class BeamDomain(BaseModel):
    """Interval (c, d) occupied by the beam"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    c: float = Field(0.0, description="Left endpoint")
    d: float = Field(math.pi, description="Right endpoint")

    @property
    def L(self) -> float:
        return self.d - self.c


@dataclass(frozen=True)
class Grid:
    """Uniform grid with N subdivisions; only the N-1 interior nodes carry unknowns"""

    N: int
    c: float
    L: float

    @classmethod
    def from_domain(cls, domain: BeamDomain, N: int) -> "Grid":
        return cls(N=int(N), c=float(domain.c), L=float(domain.L))

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def size(self) -> int:
        return self.N - 1

    @property
    def nodes(self) -> np.ndarray:
        return self.c + self.h * np.arange(1, self.N)


class DampingSpec(BaseModel):
    """
    Damping law F.

    The canonical family is F(x) = a(x + |x|^(m-2) x). Custom forms declare the
    envelope (a1, a2) they claim to satisfy:
      composite  - F(x) = sum_j coefficients[j] * |x|^(powers[j]-1) * x
      tabulated  - odd extension of a piecewise-linear table on x >= 0
      custom     - Python callables (function, derivative)
    """

    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    form: Literal["canonical", "composite", "tabulated", "custom"] = Field(
        "canonical", description="Damping law family"
    )
    m: float = Field(2.0, description="Growth exponent of the envelope")
    a: Optional[float] = Field(None, description="Canonical coefficient")
    a1: Optional[float] = Field(None, description="Lower envelope coefficient")
    a2: Optional[float] = Field(None, description="Upper envelope coefficient")
    coefficients: List[float] = Field(default_factory=list, description="Composite coefficients")
    powers: List[float] = Field(default_factory=list, description="Composite exponents")
    table_x: List[float] = Field(default_factory=list, description="Tabulated abscissae (x >= 0)")
    table_F: List[float] = Field(default_factory=list, description="Tabulated values F(table_x)")
    function: Optional[Callable[..., Any]] = Field(None, description="Custom F(x), vectorized")
    derivative: Optional[Callable[..., Any]] = Field(None, description="Custom F'(x), vectorized")

    @property
    def lower(self) -> float:
        """Effective a1 (canonical defaults to a)"""
        if self.a1 is not None:
            return float(self.a1)
        return float(self.a if self.a is not None else 0.0)

    @property
    def upper(self) -> float:
        """Effective a2 (canonical defaults to a)"""
        if self.a2 is not None:
            return float(self.a2)
        return float(self.a if self.a is not None else 0.0)


class RestoringSpec(BaseModel):
    """Restoring term G and the declared lower bound D of its primitive"""

    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True, populate_by_name=True)

    kind: Literal["zero", "odd-power", "custom"] = Field("zero", description="Restoring law family")
    lam: float = Field(0.0, alias="lambda", description="Odd-power coefficient")
    p: int = Field(1, description="Odd integer exponent")
    D: float = Field(0.0, description="Lower bound of the primitive of G")
    function: Optional[Callable[..., Any]] = Field(None, description="Custom G(u), vectorized")
    derivative: Optional[Callable[..., Any]] = Field(None, description="Custom G'(u), vectorized")
    primitive: Optional[Callable[..., Any]] = Field(None, description="Custom primitive of G")


@dataclass(frozen=True)
class ForcingSpec:
    """
    Forcing f on the interior nodes.

    zero            - f = 0
    static          - f(x) = values
    time-dependent  - f(x, t) = values * cos(omega t + phase), or function(t) when given
    """

    kind: Literal["zero", "static", "time-dependent"] = "zero"
    values: Optional[np.ndarray] = None
    omega: float = 0.0
    phase: float = 0.0
    function: Optional[Callable[[float], np.ndarray]] = None

    def at(self, t: float, size: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(size)
        if self.kind == "static":
            return self.values
        if self.function is not None:
            return np.asarray(self.function(t), dtype=float)
        return self.values * math.cos(self.omega * t + self.phase)


@dataclass(frozen=True)
class InitialData:
    """Nodal displacement u0 and velocity u1 on the interior nodes"""

    u0: np.ndarray
    u1: np.ndarray


class SimConfig(BaseModel):
    """Time stepping controls"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dt: float = Field(1e-3, description="Time step")
    T: float = Field(10.0, description="Horizon")
    newton_tol: float = Field(1e-10, description="Newton residual tolerance (discrete l2)")
    newton_max_iter: int = Field(25, description="Newton iteration cap per step")
    output_stride: int = Field(1, description="Steps between emitted records")

    @property
    def steps(self) -> int:
        """Steps to reach T; the last one is shortened when T / dt is not an integer"""
        return max(1, math.ceil(self.T / self.dt - STEP_COUNT_SLACK))

    def step_size(self, n: int) -> float:
        return self.T - n * self.dt if n == self.steps - 1 else self.dt


@dataclass(frozen=True)
class ValidatedProblem:
    """Sealed problem; build only through validate_problem"""

    domain: BeamDomain
    grid: Grid
    damping: DampingSpec
    restoring: RestoringSpec
    forcing: ForcingSpec
    init: InitialData
    cfg: SimConfig
    operator: Any
    certificate_admissible: bool
    inadmissible_reasons: Tuple[str, ...] = field(default_factory=tuple)
    digest: str = ""

    @property
    def convergence_admissible(self) -> bool:
        """Static (or zero) forcing with G = 0 and a declared damping envelope"""
        return (
            self.restoring.kind == "zero"
            and self.forcing.kind in ("zero", "static")
            and self.damping.lower > 0
        )

    def replace(self, **changes) -> "ValidatedProblem":
        """Re-validate with some of init, forcing, cfg, damping or restoring swapped"""
        parts = {
            "damping": self.damping,
            "restoring": self.restoring,
            "forcing": self.forcing,
            "init": self.init,
            "cfg": self.cfg,
        }
        parts.update(changes)
        return validate_problem(
            self.domain, self.grid, parts["damping"], parts["restoring"], parts["forcing"],
            parts["init"], parts["cfg"], allow_undamped=parts["damping"].lower == 0,
        )


def sine_profile(grid: Grid, k: int = 1, amp: float = 1.0) -> np.ndarray:
    """amp * sin(k pi (x - c) / L) sampled on the interior nodes"""
    return amp * np.sin(k * np.pi * (grid.nodes - grid.c) / grid.L)


def _check_damping(damping: DampingSpec, allow_undamped: bool) -> List[str]:
    # Imported here: the nonlinearity module types its arguments with this module
    from app.numerics.nonlinearity import damping_eval

    errors = []
    m = damping.m
    if not math.isfinite(m) or m < 2:
        errors.append(f"m out of range (m = {m}, need m >= 2)")
        return errors

    a1, a2 = damping.lower, damping.upper
    if damping.form == "canonical":
        if damping.a is None:
            errors.append("canonical damping needs coefficient a")
            return errors
        if allow_undamped and damping.a == 0 and a1 == 0 and a2 == 0:
            return errors
        if not a1 <= damping.a <= a2:
            errors.append(f"canonical coefficient a = {damping.a} outside [a1, a2] = [{a1}, {a2}]")
    if a1 <= 0:
        errors.append(f"a1 must be positive (a1 = {a1})")
    if a1 > a2:
        errors.append(f"a1 > a2 ({a1} > {a2})")
    if damping.form == "composite":
        if not damping.coefficients or len(damping.coefficients) != len(damping.powers):
            errors.append("composite damping needs matching coefficients and powers")
        elif any(c < 0 for c in damping.coefficients) or any(p < 1 for p in damping.powers):
            errors.append("composite damping needs coefficients >= 0 and powers >= 1")
    if damping.form == "tabulated":
        xs = np.asarray(damping.table_x, dtype=float)
        if xs.size < 2 or xs.size != len(damping.table_F):
            errors.append("tabulated damping needs at least two (x, F) pairs")
        elif xs[0] != 0.0 or damping.table_F[0] != 0.0 or np.any(np.diff(xs) <= 0):
            errors.append("tabulated damping needs increasing x starting at (0, 0)")
    if damping.form == "custom" and (damping.function is None or damping.derivative is None):
        errors.append("custom damping needs function and derivative")
    if errors:
        return errors

    x = SPOT_SAMPLE
    try:
        F = np.asarray(damping_eval(damping, x), dtype=float)
    except Exception as e:
        errors.append(f"damping evaluation failed: {e}")
        return errors
    if not np.all(np.isfinite(F)):
        errors.append("damping is not finite on the spot-check sample")
        return errors
    if F[x.size // 2] != 0.0:
        errors.append("damping must satisfy F(0) = 0")
    if np.any(np.diff(F) < -_SPOT_RTOL * np.abs(F[1:])):
        errors.append("damping is not nondecreasing on the spot-check sample")
    ax = np.abs(x)
    lower = a1 * (x * x + ax ** m)
    if np.any(F * x < lower * (1 - _SPOT_RTOL)):
        errors.append("damping violates F(x) x >= a1 (x^2 + |x|^m)")
    upper = a2 * (ax + ax ** (m - 1))
    if np.any(np.abs(F) > upper * (1 + _SPOT_RTOL)):
        errors.append("damping exceeds the a2 envelope")
    return errors


def _check_restoring(restoring: RestoringSpec) -> List[str]:
    from app.numerics.nonlinearity import restoring_primitive

    errors = []
    if restoring.D > 0:
        errors.append(f"D must be non-positive (D = {restoring.D})")
    if restoring.kind == "zero":
        if restoring.D != 0:
            errors.append("G = 0 requires D = 0")
        return errors
    if restoring.kind == "odd-power":
        if restoring.lam < 0:
            errors.append(f"odd-power coefficient must be non-negative (lambda = {restoring.lam})")
        if restoring.p < 1 or restoring.p % 2 == 0:
            errors.append(f"odd-power exponent must be an odd positive integer (p = {restoring.p})")
        return errors
    if restoring.function is None or restoring.derivative is None or restoring.primitive is None:
        errors.append("custom G needs function, derivative and primitive")
        return errors
    prim = np.asarray(restoring_primitive(restoring, SPOT_SAMPLE), dtype=float)
    if not np.all(np.isfinite(prim)) or np.any(prim < restoring.D - _SPOT_RTOL * np.abs(prim)):
        errors.append("primitive of G drops below D on the spot-check sample")
    return errors


def _check_vector(name: str, vec: Optional[np.ndarray], size: int) -> List[str]:
    if vec is None:
        return [f"{name} is missing"]
    vec = np.asarray(vec)
    if vec.shape != (size,):
        return [f"{name} has length {vec.size}, expected {size}"]
    if not np.all(np.isfinite(vec)):
        return [f"{name} has non-finite entries"]
    return []


def _digest(domain, grid, damping, restoring, forcing, init, cfg) -> str:
    def dump(model: BaseModel) -> dict:
        out = {}
        for key, value in model.model_dump().items():
            out[key] = getattr(value, "__qualname__", repr(value)) if callable(value) else value
        return out

    def array_digest(arr) -> Optional[str]:
        if arr is None:
            return None
        return hashlib.sha256(np.ascontiguousarray(arr, dtype=float).tobytes()).hexdigest()

    payload = {
        "domain": dump(domain),
        "grid": {"N": grid.N},
        "damping": dump(damping),
        "restoring": dump(restoring),
        "forcing": {
            "kind": forcing.kind,
            "values": array_digest(forcing.values),
            "omega": forcing.omega,
            "phase": forcing.phase,
            "function": getattr(forcing.function, "__qualname__", None),
        },
        "initial": {"u0": array_digest(init.u0), "u1": array_digest(init.u1)},
        "time": dump(cfg),
    }
    blob = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def validate_problem(
    domain: BeamDomain,
    grid: Grid,
    damping: DampingSpec,
    restoring: RestoringSpec,
    forcing: ForcingSpec,
    init: InitialData,
    cfg: SimConfig,
    allow_undamped: bool = False,
) -> ValidatedProblem:
    """
    Check every hypothesis and seal the problem.

    Args:
        allow_undamped: Accept a canonical law with a = a1 = a2 = 0 (conservative
            runs used to test energy conservation); such problems are never
            certificate-admissible

    Returns:
        ValidatedProblem

    Raises:
        ProblemValidationError: listing every violated hypothesis
    """
    from app.numerics.operators import assemble_biharmonic

    errors = []
    if not (math.isfinite(domain.c) and math.isfinite(domain.d)) or domain.c >= domain.d:
        errors.append(f"domain needs c < d (c = {domain.c}, d = {domain.d})")
    if grid.N < 4:
        errors.append(f"grid needs N >= 4 (N = {grid.N})")
    elif abs(grid.L - domain.L) > 1e-12 * max(1.0, abs(domain.L)) or grid.c != domain.c:
        errors.append("grid does not match the domain")

    errors.extend(_check_damping(damping, allow_undamped))
    errors.extend(_check_restoring(restoring))

    if cfg.dt <= 0 or not math.isfinite(cfg.dt):
        errors.append(f"dt must be positive (dt = {cfg.dt})")
    if cfg.T <= 0 or not math.isfinite(cfg.T):
        errors.append(f"T must be positive (T = {cfg.T})")
    elif cfg.dt > 0 and cfg.dt > cfg.T:
        errors.append(f"dt must not exceed T (dt = {cfg.dt}, T = {cfg.T})")
    if cfg.newton_tol <= 0:
        errors.append(f"newton_tol must be positive (newton_tol = {cfg.newton_tol})")
    if cfg.newton_max_iter < 1:
        errors.append("newton_max_iter must be at least 1")
    if cfg.output_stride < 1:
        errors.append("output_stride must be at least 1")

    if grid.N >= 4:
        size = grid.size
        errors.extend(_check_vector("u0", init.u0, size))
        errors.extend(_check_vector("u1", init.u1, size))
        if forcing.kind in ("static", "time-dependent") and forcing.function is None:
            errors.extend(_check_vector("forcing profile", forcing.values, size))
        if forcing.kind == "time-dependent" and not math.isfinite(forcing.omega):
            errors.append("forcing omega must be finite")

    if errors:
        logger.warning(f"Problem rejected | violations: {len(errors)}")
        raise ProblemValidationError("invalid problem", errors)

    reasons = []
    if restoring.kind != "zero":
        reasons.append("certificate requires G ≡ 0")
    if forcing.kind != "zero":
        reasons.append("certificate requires f ≡ 0")
    if damping.lower <= 0:
        reasons.append("certificate requires a1 > 0")

    u0 = np.array(init.u0, dtype=float)
    u1 = np.array(init.u1, dtype=float)
    u0.setflags(write=False)
    u1.setflags(write=False)
    sealed_init = InitialData(u0=u0, u1=u1)
    sealed_forcing = forcing
    if forcing.values is not None:
        values = np.array(forcing.values, dtype=float)
        values.setflags(write=False)
        sealed_forcing = ForcingSpec(
            kind=forcing.kind, values=values, omega=forcing.omega, phase=forcing.phase, function=forcing.function
        )

    problem = ValidatedProblem(
        domain=domain,
        grid=grid,
        damping=damping,
        restoring=restoring,
        forcing=sealed_forcing,
        init=sealed_init,
        cfg=cfg,
        operator=assemble_biharmonic(grid),
        certificate_admissible=not reasons,
        inadmissible_reasons=tuple(reasons),
        digest=_digest(domain, grid, damping, restoring, sealed_forcing, sealed_init, cfg),
    )
    logger.debug(f"Problem validated | N: {grid.N} | certificate admissible: {problem.certificate_admissible}")
    return problem
