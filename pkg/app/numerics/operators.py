"""
Discrete biharmonic operator with hinged ends, discrete norms, sine transforms
and the discrete Poincare / sup-embedding constants.

With u_0 = u_N = 0 and the ghost reflection u_-1 = -u_1 the second difference
vanishes at both ends, so the assembled operator is exactly the square of the
Dirichlet second-difference matrix and shares its sine eigenvectors.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.model.problem import Grid
from app.numerics.banded import band_matvec, banded_to_dense

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BandedOperator:
    """Symmetric positive definite pentadiagonal operator in LAPACK banded storage"""

    ab: np.ndarray
    h: float

    @property
    def size(self) -> int:
        return self.ab.shape[1]


@dataclass(frozen=True)
class DiscreteConstants:
    B: float
    k_inf: float
    mu1: float


@dataclass(frozen=True)
class NormSet:
    l2: float
    h2star: float
    sup: float
    lm: Optional[float] = None


def assemble_biharmonic(grid: Grid) -> BandedOperator:
    """
    Assemble the (1, -4, 6, -4, 1)/h^4 stencil on the N-1 interior nodes.

    First and last rows carry (5, -4, 1)/h^4 after the ghost reflection.
    """
    n = grid.size
    if grid.N < 4:
        raise ValueError(f"biharmonic assembly needs N >= 4 (N = {grid.N})")
    scale = 1.0 / grid.h ** 4
    ab = np.zeros((5, n))
    ab[0, 2:] = 1.0 * scale
    ab[1, 1:] = -4.0 * scale
    ab[2, :] = 6.0 * scale
    ab[2, 0] = 5.0 * scale
    ab[2, -1] = 5.0 * scale
    ab[3, :-1] = -4.0 * scale
    ab[4, :-2] = 1.0 * scale
    ab.setflags(write=False)
    return BandedOperator(ab=ab, h=grid.h)


def apply(op: BandedOperator, u: np.ndarray) -> np.ndarray:
    """Matrix-vector product A u"""
    u = np.asarray(u)
    if u.shape != (op.size,):
        raise ValueError(f"vector has shape {u.shape}, operator expects ({op.size},)")
    return band_matvec(op.ab, u)


def to_dense(op: BandedOperator) -> np.ndarray:
    return banded_to_dense(op.ab)


def second_difference(u: np.ndarray, h: float) -> np.ndarray:
    """Dirichlet second difference (u_{i-1} - 2u_i + u_{i+1}) / h^2 with zero ends"""
    padded = np.concatenate(([0.0], u, [0.0]))
    return (padded[:-2] - 2.0 * padded[1:-1] + padded[2:]) / (h * h)


def inner(u: np.ndarray, w: np.ndarray, h: float) -> float:
    """Discrete L2 inner product h * sum(u w)"""
    return float(h * np.dot(u, w))


def quadratic_form(op: BandedOperator, u: np.ndarray) -> float:
    """
    (A u, u)_h, evaluated as h * |second_difference(u)|^2.

    Same quadratic form (A is the square of the second difference); the
    factored evaluation keeps round-off at O(h^-2) instead of O(h^-4).
    """
    lap = second_difference(u, op.h)
    return float(op.h * np.dot(lap, lap))


def norms(u: np.ndarray, grid: Grid, op: BandedOperator, m: Optional[float] = None) -> NormSet:
    """
    Discrete l2, H2* (energy), sup and optionally l^m norms of u.

    Raises:
        ValueError: m < 1 or non-finite entries
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("norms of a vector with non-finite entries")
    h = grid.h
    lm = None
    if m is not None:
        if m < 1:
            raise ValueError(f"l^m norm needs m >= 1 (m = {m})")
        lm = float((h * np.sum(np.abs(u) ** m)) ** (1.0 / m))
    return NormSet(
        l2=math.sqrt(inner(u, u, h)),
        h2star=math.sqrt(quadratic_form(op, u)),
        sup=float(np.max(np.abs(u))) if u.size else 0.0,
        lm=lm,
    )


def sine_matrix(n: int) -> np.ndarray:
    """S[i, k] = sin((i+1)(k+1) pi / (n+1)); S @ S = (n+1)/2 * I"""
    idx = np.arange(1, n + 1)
    return np.sin(np.outer(idx, idx) * np.pi / (n + 1))


def dst(u: np.ndarray) -> np.ndarray:
    """
    Sine coefficients c with u_i = sum_k c_k sin(k pi (x_i - c) / L).

    Direct O(N^2) evaluation.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size < 1:
        raise ValueError("dst expects a non-empty vector")
    n = u.size
    return (2.0 / (n + 1)) * (sine_matrix(n) @ u)


def idst(coefficients: np.ndarray) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.ndim != 1 or coefficients.size < 1:
        raise ValueError("idst expects a non-empty vector")
    return sine_matrix(coefficients.size) @ coefficients


def laplacian_eigenvalues(grid: Grid) -> np.ndarray:
    """lambda_k = 4 sin^2(k pi h / (2L)) / h^2 for k = 1..N-1"""
    k = np.arange(1, grid.N)
    return 4.0 * np.sin(k * np.pi / (2.0 * grid.N)) ** 2 / grid.h ** 2


def biharmonic_eigenvalues(grid: Grid) -> np.ndarray:
    return laplacian_eigenvalues(grid) ** 2


def discrete_constants(grid: Grid) -> DiscreteConstants:
    """
    Sharp discrete constants: |u|_2 <= B |u|_H2*, |u|_inf <= k_inf |u|_H2*.

    B = 1 / lambda_1 exceeds the continuum (L/pi)^2 slightly at finite N.
    """
    lam1 = float(laplacian_eigenvalues(grid)[0])
    B = 1.0 / lam1
    return DiscreteConstants(B=B, k_inf=0.5 * math.sqrt(grid.L) * math.sqrt(B), mu1=lam1 * lam1)
