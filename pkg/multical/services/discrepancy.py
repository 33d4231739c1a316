"""GaSP and discretized scaled-GaSP discrepancy covariances."""
import logging
from typing import Optional, Sequence

import numpy as np

from multical.config import config
from multical.exceptions import DomainError
from multical.schemas.models import (
    CorrelationMatrix,
    DiscrepancyMode,
    DiscrepancyModel,
    KernelFamily,
    KernelSpec,
)
from multical.services.kernels import build_correlation_matrix
from multical.utils.linalg import cho_solve, jittered_cholesky, logdet

logger = logging.getLogger(__name__)


def default_lambda_z(n: int, c: Optional[float] = None) -> float:
    """Scaling parameter ``C * sqrt(n)`` with ``C`` from config (100 by default)."""
    if n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    c = config.SGASP_C if c is None else c
    return float(c * np.sqrt(n))


def transform_covariance(
    R: CorrelationMatrix, lambda_z: float, n: Optional[int] = None
) -> CorrelationMatrix:
    """Scaled covariance ``R_z = (R^-1 + (lambda_z/n) I)^-1``.

    Evaluated as ``(I + c R)^-1 R`` with ``c = lambda_z/n`` so that ``R^-1`` is
    never formed; ``lambda_z == 0`` returns ``R`` unchanged.
    """
    if not np.isfinite(lambda_z) or lambda_z < 0:
        raise DomainError(f"lambda_z must be finite and non-negative, got {lambda_z}")
    n = R.n if n is None else n
    if n < 1:
        raise DomainError("n must be positive")
    if lambda_z == 0:
        return R

    c = lambda_z / n
    B = np.eye(R.n) + c * R.entries
    LB, _ = jittered_cholesky(B)
    Rz = cho_solve(LB, R.entries)
    Rz = 0.5 * (Rz + Rz.T)

    L, jitter = jittered_cholesky(Rz)
    logger.debug(f"Scaled covariance built: lambda_z={lambda_z:.4g}, n={n}, jitter={jitter:.1e}")
    return CorrelationMatrix(entries=Rz, factor=L, log_det=logdet(L), jitter_used=jitter)


def design_volume(inputs: np.ndarray) -> float:
    """Volume of the axis-aligned bounding box of the design."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    return float(np.prod(inputs.max(axis=0) - inputs.min(axis=0)))


def scaling_density(z: float, tau2: float, lambda_z: float, vol: float) -> float:
    """Exponential density of the mean squared discrepancy."""
    if tau2 <= 0 or lambda_z <= 0 or vol <= 0:
        raise DomainError("tau2, lambda_z and vol must be positive")
    if z < 0:
        raise DomainError("z must be non-negative")
    rate = lambda_z / (2.0 * tau2 * vol)
    return float(rate * np.exp(-rate * z))


def discrepancy_kernel(
    discrepancy: DiscrepancyModel, inverse_ranges: Optional[Sequence[float]] = None
) -> KernelSpec:
    """Kernel of the discrepancy with live inverse ranges."""
    base = discrepancy.kernel
    if inverse_ranges is None:
        return base
    return KernelSpec(
        family=base.family,
        inverse_ranges=[float(b) for b in inverse_ranges],
        roughness=base.roughness,
    )


def discrepancy_correlation(
    discrepancy: DiscrepancyModel,
    inputs: np.ndarray,
    inverse_ranges: Optional[Sequence[float]] = None,
) -> CorrelationMatrix:
    """``R`` for GaSP or ``R_z`` for S-GaSP on the calibration inputs."""
    R = build_correlation_matrix(discrepancy_kernel(discrepancy, inverse_ranges), inputs)
    if discrepancy.mode == DiscrepancyMode.SGASP:
        return transform_covariance(R, discrepancy.lambda_z, R.n)
    return R


def make_discrepancy(
    mode: DiscrepancyMode,
    n: int,
    p: int,
    family: KernelFamily = KernelFamily.MATERN52,
    c: Optional[float] = None,
    lambda_z: Optional[float] = None,
) -> DiscrepancyModel:
    """Discrepancy model with unit inverse ranges and the default scaling for S-GaSP."""
    lam = 0.0
    if mode == DiscrepancyMode.SGASP:
        lam = default_lambda_z(n, c) if lambda_z is None else lambda_z
    return DiscrepancyModel(
        mode=mode,
        lambda_z=lam,
        kernel=KernelSpec(family=family, inverse_ranges=[1.0] * p),
    )
