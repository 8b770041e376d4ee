"""
Energy functionals along trajectories: solution energy E, perturbed energy H,
damping dissipation and log-linear decay-rate fits.
"""
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.model.problem import DampingSpec
from app.numerics.nonlinearity import damping_eval
from app.numerics.operators import BandedOperator, inner, quadratic_form

if TYPE_CHECKING:
    from app.dynamics.integrator import State

logger = logging.getLogger(__name__)

RECORD_FIELDS = ("t", "E", "H", "dissipation", "l2_u", "h2star_u", "l2_v", "sup_u", "newton_iters")


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    E: float
    H: float
    dissipation: float
    l2_u: float
    h2star_u: float
    l2_v: float
    sup_u: float
    newton_iters: int = 0

    def as_row(self) -> Tuple:
        return tuple(getattr(self, name) for name in RECORD_FIELDS)


def records_from_columns(columns: Dict[str, np.ndarray]) -> List[EnergyRecord]:
    """Rebuild records from trajectory CSV columns"""
    size = len(columns["t"])
    return [
        EnergyRecord(
            **{name: float(columns[name][i]) for name in RECORD_FIELDS if name != "newton_iters"},
            newton_iters=int(columns["newton_iters"][i]) if "newton_iters" in columns else 0,
        )
        for i in range(size)
    ]


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    residual: float
    samples: int


def energy(state: "State", op: BandedOperator) -> float:
    """E = 1/2 (v, v)_h + 1/2 (A u, u)_h"""
    return 0.5 * inner(state.v, state.v, op.h) + 0.5 * quadratic_form(op, state.u)


def perturbed_energy(state: "State", eps: float, op: BandedOperator) -> float:
    """H = E + eps (u, v)_h"""
    if eps < 0:
        raise ValueError(f"eps must be non-negative (eps = {eps})")
    return energy(state, op) + eps * inner(state.u, state.v, op.h)


def dissipation(state: "State", damping: DampingSpec, h: float) -> float:
    """(F(v), v)_h, non-negative for every validated damping law"""
    return inner(damping_eval(damping, state.v), state.v, h)


def energy_record(
    state: "State",
    op: BandedOperator,
    damping: DampingSpec,
    eps: Optional[float] = None,
    newton_iters: int = 0,
) -> EnergyRecord:
    """
    One diagnostics row; H falls back to E when no certificate supplies eps.
    """
    h = op.h
    E = energy(state, op)
    H = E if eps is None else E + eps * inner(state.u, state.v, h)
    return EnergyRecord(
        t=float(state.t),
        E=E,
        H=H,
        dissipation=dissipation(state, damping, h),
        l2_u=math.sqrt(inner(state.u, state.u, h)),
        h2star_u=math.sqrt(quadratic_form(op, state.u)),
        l2_v=math.sqrt(inner(state.v, state.v, h)),
        sup_u=float(np.max(np.abs(state.u))) if state.u.size else 0.0,
        newton_iters=int(newton_iters),
    )


def upper_envelope(values: Sequence[float]) -> np.ndarray:
    """Running maximum taken from the end: env[i] = max(values[i:])"""
    values = np.asarray(values, dtype=float)
    return np.maximum.accumulate(values[::-1])[::-1]


def fit_decay_rate(
    t: Sequence[float],
    values: Sequence[float],
    window: Optional[Tuple[float, float]] = None,
    envelope: bool = False,
    min_samples: int = 10,
) -> DecayFit:
    """
    Least-squares line through (t, ln value); rate = -slope.

    Args:
        t: Sample times
        values: Positive samples
        window: (t_lo, t_hi); defaults to the tail half of the series
        envelope: Fit the running tail maximum instead of the raw values, for
            oscillating series that touch zero
        min_samples: Fewest samples accepted inside the window

    Returns:
        DecayFit with rate, intercept and RMS residual in log space

    Raises:
        ValueError: too few samples or non-positive values in the window
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.shape != values.shape:
        raise ValueError("times and values differ in length")
    if t.size == 0:
        raise ValueError("cannot fit an empty series")
    if envelope:
        values = upper_envelope(values)
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    mask = (t >= window[0]) & (t <= window[1])
    if int(mask.sum()) < min_samples:
        raise ValueError(f"decay fit needs at least {min_samples} samples in window {window}, got {int(mask.sum())}")
    tw = t[mask]
    vw = values[mask]
    if np.any(vw <= 0) or not np.all(np.isfinite(vw)):
        raise ValueError("decay fit needs positive finite values in the window")
    slope, intercept = np.polyfit(tw, np.log(vw), 1)
    residual = float(np.sqrt(np.mean((np.log(vw) - (slope * tw + intercept)) ** 2)))
    return DecayFit(rate=float(-slope), intercept=float(intercept), residual=residual, samples=int(tw.size))
