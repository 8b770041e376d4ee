"""
Pointwise damping F, restoring term G, the primitive of G and the power-bound
constant gamma with int |u|^m <= gamma int u^2 for |u| <= M.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from app.model.problem import DampingSpec, RestoringSpec

logger = logging.getLogger(__name__)

# Regularization of F'(0) when 2 < m < 3
DERIVATIVE_EPS = 1e-12


@dataclass(frozen=True)
class PowerBoundConstant:
    M: float
    m: float
    gamma: float
    gamma_lipschitz: float


def _odd_table(spec: DampingSpec, x: np.ndarray):
    xs = np.asarray(spec.table_x, dtype=float)
    fs = np.asarray(spec.table_F, dtype=float)
    ax = np.abs(x)
    slope_end = (fs[-1] - fs[-2]) / (xs[-1] - xs[-2])
    value = np.interp(ax, xs, fs)
    beyond = ax > xs[-1]
    value = np.where(beyond, fs[-1] + slope_end * (ax - xs[-1]), value)
    # Slope of the segment containing |x|
    seg = np.clip(np.searchsorted(xs, ax, side="right") - 1, 0, xs.size - 2)
    slopes = np.diff(fs) / np.diff(xs)
    slope = np.where(beyond, slope_end, slopes[seg])
    return np.sign(x) * value, slope


def damping_eval(spec: DampingSpec, x):
    """
    F(x), vectorized.

    Example: m = 3, a = 1 gives F(2) = 2 + 4 = 6.
    """
    x = np.asarray(x, dtype=float)
    if spec.form == "canonical":
        return spec.a * (x + np.abs(x) ** (spec.m - 2.0) * x)
    if spec.form == "composite":
        ax = np.abs(x)
        out = np.zeros_like(x)
        for coeff, power in zip(spec.coefficients, spec.powers):
            out = out + coeff * ax ** (power - 1.0) * x
        return out
    if spec.form == "tabulated":
        return _odd_table(spec, x)[0]
    return np.asarray(spec.function(x), dtype=float)


def damping_derivative(spec: DampingSpec, x):
    """
    F'(x), vectorized; only used as a Newton slope.

    For the canonical family with 2 < m < 3 the slope blows up at 0, so
    |x| is shifted by DERIVATIVE_EPS.
    """
    x = np.asarray(x, dtype=float)
    if spec.form == "canonical":
        m = spec.m
        ax = np.abs(x)
        if 2.0 < m < 3.0:
            ax = ax + DERIVATIVE_EPS
        return spec.a * (1.0 + (m - 1.0) * ax ** (m - 2.0))
    if spec.form == "composite":
        ax = np.abs(x) + DERIVATIVE_EPS
        out = np.zeros_like(x)
        for coeff, power in zip(spec.coefficients, spec.powers):
            if power == 1.0:
                out = out + coeff
            else:
                out = out + coeff * power * ax ** (power - 1.0)
        return out
    if spec.form == "tabulated":
        return _odd_table(spec, x)[1]
    return np.asarray(spec.derivative(x), dtype=float)


def restoring_eval(spec: RestoringSpec, u):
    """G(u), vectorized; odd-power is lambda * u^p"""
    u = np.asarray(u)
    if spec.kind == "zero":
        return np.zeros(u.shape, dtype=np.result_type(u.dtype, float))
    if spec.kind == "odd-power":
        return spec.lam * u ** spec.p
    return np.asarray(spec.function(u))


def restoring_derivative(spec: RestoringSpec, u):
    u = np.asarray(u)
    if spec.kind == "zero":
        return np.zeros_like(u, dtype=float)
    if spec.kind == "odd-power":
        if spec.p == 1:
            return np.full_like(u, spec.lam, dtype=float)
        return spec.lam * spec.p * u ** (spec.p - 1)
    return np.asarray(spec.derivative(u), dtype=float)


def restoring_primitive(spec: RestoringSpec, u):
    """int_0^u G(s) ds; custom laws ship their own primitive"""
    u = np.asarray(u, dtype=float)
    if spec.kind == "zero":
        return np.zeros_like(u)
    if spec.kind == "odd-power":
        return spec.lam * u ** (spec.p + 1) / (spec.p + 1)
    return np.asarray(spec.primitive(u), dtype=float)


def power_bound_constant(M: float, m: float) -> PowerBoundConstant:
    """
    gamma = M^(m-2), from |u|^m = |u|^(m-2) u^2 <= M^(m-2) u^2.

    The Lipschitz route through h(x) = |x|^(m/2) gives (m/2)^2 M^(m-2); it is
    kept for comparison only.

    Raises:
        ValueError: M <= 0 or m < 2
    """
    if not (M > 0 and math.isfinite(M)):
        raise ValueError(f"sup bound M must be positive (M = {M})")
    if m < 2:
        raise ValueError(f"exponent m must be >= 2 (m = {m})")
    gamma = M ** (m - 2.0)
    return PowerBoundConstant(M=M, m=m, gamma=gamma, gamma_lipschitz=(m / 2.0) ** 2 * gamma)
