"""Cholesky helpers with a fixed jitter ladder."""
import logging
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg as la

from multical.exceptions import NumericalSingularityError

logger = logging.getLogger(__name__)

# Relative to the mean of the diagonal, which is 1 for correlation matrices.
JITTER_LADDER: Tuple[float, ...] = (0.0, 1e-10, 1e-8, 1e-6)


def jittered_cholesky(
    A: np.ndarray,
    ladder: Sequence[float] = JITTER_LADDER,
    spec: Optional[Any] = None,
) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A``, escalating diagonal jitter on failure.

    Returns:
        tuple: (L, jitter_used) with ``L @ L.T == A + jitter_used * I``.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NumericalSingularityError("Matrix has non-finite entries", spec=spec)

    scale = float(np.mean(np.diag(A))) if A.size else 1.0
    if scale <= 0:
        scale = 1.0
    di = np.diag_indices(A.shape[0])

    for step in ladder:
        jitter = step * scale
        if jitter == 0.0:
            candidate = A
        else:
            candidate = A.copy()
            candidate[di] += jitter
        try:
            L = la.cholesky(candidate, lower=True, check_finite=False)
        except la.LinAlgError:
            logger.debug(f"Cholesky failed with jitter {jitter:.1e}")
            continue
        if jitter > 0:
            logger.warning(f"Cholesky needed jitter {jitter:.1e} (n={A.shape[0]})")
        return L, jitter

    raise NumericalSingularityError(
        f"Cholesky failed after maximal jitter {ladder[-1] * scale:.1e} for {spec!r}", spec=spec
    )


def logdet(L: np.ndarray) -> float:
    """Log-determinant of ``L @ L.T`` from its lower Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def cho_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) x = b``."""
    return la.cho_solve((L, True), b, check_finite=False)


def tri_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L x = b`` for lower-triangular ``L``."""
    return la.solve_triangular(L, b, lower=True, check_finite=False)


def cho_inverse(L: np.ndarray) -> np.ndarray:
    """Symmetric inverse of ``L @ L.T``."""
    inv = cho_solve(L, np.eye(L.shape[0]))
    return 0.5 * (inv + inv.T)


def quad_form(L: np.ndarray, r: np.ndarray) -> float:
    """``r^T (L L^T)^{-1} r`` via one triangular solve."""
    z = tri_solve(L, r)
    return float(z @ z)
