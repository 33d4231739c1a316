"""Correlation functions and correlation-matrix construction."""
import logging
from typing import Optional, Union

import numpy as np

from multical.exceptions import DomainError
from multical.schemas.models import CorrelationMatrix, KernelFamily, KernelSpec
from multical.utils.linalg import jittered_cholesky, logdet

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_SQRT5 = np.sqrt(5.0)


def _power_exponential(d: np.ndarray, gamma: float, alpha: float) -> np.ndarray:
    return np.exp(-np.power(d / gamma, alpha))


def _matern52(d: np.ndarray, gamma: float) -> np.ndarray:
    r = _SQRT5 * d / gamma
    return (1.0 + r + r * r / 3.0) * np.exp(-r)


def eval_kernel_1d(
    family: KernelFamily,
    d: ArrayLike,
    gamma: float,
    alpha: Optional[float] = None,
) -> ArrayLike:
    """Evaluate a one-dimensional correlation at distance ``d`` with range ``gamma``.

    ``alpha`` is the power-exponential roughness (ignored otherwise).
    """
    d_arr = np.asarray(d, dtype=float)
    if not np.isfinite(gamma) or gamma <= 0:
        raise DomainError(f"range parameter must be positive and finite, got {gamma}")
    if not np.all(np.isfinite(d_arr)) or np.any(d_arr < 0):
        raise DomainError("distances must be finite and non-negative")

    if family == KernelFamily.MATERN52:
        out = _matern52(d_arr, gamma)
    elif family == KernelFamily.EXPONENTIAL:
        out = _power_exponential(d_arr, gamma, 1.0)
    elif family == KernelFamily.POWER_EXPONENTIAL:
        a = 1.9 if alpha is None else float(alpha)
        if not 0 < a <= 2:
            raise DomainError(f"roughness must lie in (0, 2], got {a}")
        out = _power_exponential(d_arr, gamma, a)
    else:
        raise DomainError(f"unknown kernel family {family!r}")

    return float(out) if np.ndim(d) == 0 else out


def _roughness(spec: KernelSpec, t: int) -> Optional[float]:
    return spec.roughness[t] if spec.roughness is not None else None


def eval_product_kernel(spec: KernelSpec, xa: np.ndarray, xb: np.ndarray) -> float:
    """Product of per-dimension correlations between two p-vectors."""
    xa = np.atleast_1d(np.asarray(xa, dtype=float))
    xb = np.atleast_1d(np.asarray(xb, dtype=float))
    if xa.shape != (spec.dim,) or xb.shape != (spec.dim,):
        raise DomainError(
            f"points must have dimension {spec.dim}, got {xa.shape} and {xb.shape}"
        )
    value = 1.0
    for t, beta in enumerate(spec.inverse_ranges):
        value *= eval_kernel_1d(spec.family, abs(xa[t] - xb[t]), 1.0 / beta, _roughness(spec, t))
    return float(value)


def cross_correlation(spec: KernelSpec, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    """Correlation matrix between the rows of ``xa`` (n x p) and ``xb`` (m x p)."""
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    if xa.ndim == 1:
        xa = xa[:, None]
    if xb.ndim == 1:
        xb = xb[:, None]
    if xa.shape[1] != spec.dim or xb.shape[1] != spec.dim:
        raise DomainError(
            f"inputs must have {spec.dim} columns, got {xa.shape[1]} and {xb.shape[1]}"
        )

    out = np.ones((xa.shape[0], xb.shape[0]))
    for t, beta in enumerate(spec.inverse_ranges):
        d = np.abs(xa[:, t][:, None] - xb[:, t][None, :])
        out *= eval_kernel_1d(spec.family, d, 1.0 / beta, _roughness(spec, t))
    return out


def build_correlation_matrix(spec: KernelSpec, inputs: np.ndarray) -> CorrelationMatrix:
    """Correlation matrix over the design rows with its jittered Cholesky factor."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if inputs.shape[0] < 1:
        raise DomainError("design must have at least one row")
    if not np.all(np.isfinite(inputs)):
        raise DomainError("design inputs must be finite")

    R = cross_correlation(spec, inputs, inputs)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)

    L, jitter = jittered_cholesky(R, spec=spec)
    return CorrelationMatrix(entries=R, factor=L, log_det=logdet(L), jitter_used=jitter)
