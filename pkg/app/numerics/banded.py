"""
Pentadiagonal systems in LAPACK banded storage.

``ab[2 + i - j, j] == A[i, j]`` for |i - j| <= 2, i.e. row 0 holds the second
super-diagonal, row 2 the main diagonal and row 4 the second sub-diagonal.
"""
import logging

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from common.errors import SingularSystemError, SolverError

logger = logging.getLogger(__name__)

LOWER = 2
UPPER = 2


def band_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Product A @ x for A in banded storage.

    The result takes the wider of the two dtypes, so an extended-precision x
    gives an extended-precision product.
    """
    ab = np.asarray(ab)
    x = np.asarray(x)
    y = ab[2] * x
    y[:-1] += ab[1, 1:] * x[1:]
    y[:-2] += ab[0, 2:] * x[2:]
    y[1:] += ab[3, :-1] * x[:-1]
    y[2:] += ab[4, :-2] * x[:-2]
    return y


def with_diagonal(ab: np.ndarray, scale: float, diagonal) -> np.ndarray:
    """Band of ``scale * A + diag(diagonal)``"""
    out = scale * np.asarray(ab, dtype=float)
    out[2] += diagonal
    return out


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    n = ab.shape[1]
    dense = np.zeros((n, n))
    for offset in range(-LOWER, UPPER + 1):
        row = UPPER - offset
        if offset >= 0:
            idx = np.arange(n - offset)
            dense[idx, idx + offset] = ab[row, offset:]
        else:
            idx = np.arange(-offset, n)
            dense[idx, idx + offset] = ab[row, : n + offset]
    return dense


def banded_solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve A x = rhs with banded LU (partial pivoting inside the band).

    Args:
        ab: numpy.ndarray, shape (5, n), the system in LAPACK banded storage
        rhs: numpy.ndarray, shape (n,)

    Returns:
        numpy.ndarray: the solution x

    Raises:
        SingularSystemError: on a numerically singular pivot
        SolverError: on shape mismatch or non-finite input
    """
    ab = np.asarray(ab, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if ab.ndim != 2 or ab.shape[0] != LOWER + UPPER + 1:
        raise SolverError(f"banded system must have {LOWER + UPPER + 1} rows, got shape {ab.shape}")
    if rhs.shape != (ab.shape[1],):
        raise SolverError(f"right-hand side has shape {rhs.shape}, expected ({ab.shape[1]},)")
    if not (np.all(np.isfinite(ab)) and np.all(np.isfinite(rhs))):
        raise SolverError("banded system has non-finite entries")
    try:
        return solve_banded((LOWER, UPPER), ab, rhs, check_finite=False)
    except (LinAlgError, ValueError) as e:
        logger.error(f"Banded solve failed: {e}")
        raise SingularSystemError(f"numerically singular banded system: {e}")
