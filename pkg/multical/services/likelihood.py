"""Marginal likelihoods and discrepancy posteriors of the multi-source model.

Source ``l`` observes ``y_l = f_l(theta) + mu_l 1 + delta + delta_l + eps_l`` with
``delta ~ N(0, tau2 R)`` shared by all sources, ``delta_l ~ N(0, sigma2_l R_l)``
and ``eps_l ~ N(0, sigma2_0l W_l^-1)``. Integrating ``delta_l`` and ``eps_l``
gives per-source covariances ``S_l = sigma2_l R_l + sigma2_0l W_l^-1``; the
joint density over all sources is then evaluated with k + 2 factorizations of
n x n matrices instead of one kn x kn factorization.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from multical.exceptions import AlignmentError, DomainError
from multical.schemas.models import (
    CorrelationMatrix,
    DiscrepancyModel,
    KernelFamily,
    KernelSpec,
    MultiSourceDataset,
    ParameterState,
    SourceObservations,
)
from multical.services.data import validate_alignment
from multical.services.discrepancy import discrepancy_correlation
from multical.services.kernels import build_correlation_matrix
from multical.utils.linalg import cho_inverse, cho_solve, jittered_cholesky, logdet, quad_form

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


class SourceFactorization:
    """Covariance ``S_l`` of one source with its Cholesky factor and inverse."""

    def __init__(self, cov: np.ndarray):
        self.cov = cov
        self.factor, self.jitter_used = jittered_cholesky(cov)
        self.log_det = logdet(self.factor)
        self.inverse = cho_inverse(self.factor)

    @property
    def n(self) -> int:
        return self.cov.shape[0]

    def log_density(self, residual: np.ndarray) -> float:
        """log N(residual; 0, S_l)."""
        return -0.5 * (self.n * LOG_2PI + self.log_det + quad_form(self.factor, residual))


def bias_kernel(
    family: KernelFamily, inverse_ranges: Sequence[float], roughness: Optional[List[float]] = None
) -> KernelSpec:
    return KernelSpec(
        family=family, inverse_ranges=[float(b) for b in inverse_ranges], roughness=roughness
    )


def source_covariance(
    inputs: np.ndarray,
    sigma2: float,
    eta: float,
    inverse_ranges: Sequence[float],
    weights: Optional[np.ndarray] = None,
    family: KernelFamily = KernelFamily.MATERN52,
    roughness: Optional[List[float]] = None,
) -> SourceFactorization:
    """``S_l = sigma2 R_l + eta sigma2 W^-1``."""
    R = build_correlation_matrix(bias_kernel(family, inverse_ranges, roughness), inputs)
    w = np.ones(R.n) if weights is None else np.asarray(weights, dtype=float)
    cov = sigma2 * R.entries
    cov[np.diag_indices(R.n)] += eta * sigma2 / w
    return SourceFactorization(cov)


def noise_covariance(noise_var: float, weights: np.ndarray) -> SourceFactorization:
    """Pure-noise source ``sigma2_0 W^-1`` used by the no-bias model."""
    if noise_var <= 0:
        raise DomainError(f"noise variance must be positive, got {noise_var}")
    return SourceFactorization(np.diag(noise_var / np.asarray(weights, dtype=float)))


class JointCovariance:
    """Cached block algebra for k sources sharing one discrepancy.

    With ``A = sum_l S_l^-1`` and ``C`` the discrepancy covariance,
    ``M = A^-1 + C``. Both the joint log-density and the conditional law of
    ``delta`` follow from factorizations of ``S_l``, ``A`` and ``M``; ``C``
    itself is never factorized, so a singular ``C`` is allowed.
    """

    def __init__(self, sources: List[SourceFactorization], disc_cov: np.ndarray):
        if not sources:
            raise DomainError("at least one source is required")
        n = sources[0].n
        if any(s.n != n for s in sources) or disc_cov.shape != (n, n):
            raise DomainError("source and discrepancy covariances must share one n")
        self.sources = list(sources)
        self.disc_cov = disc_cov

        A = np.zeros((n, n))
        for s in self.sources:
            A += s.inverse
        A = 0.5 * (A + A.T)
        self.A_factor, _ = jittered_cholesky(A)
        self.A_inverse = cho_inverse(self.A_factor)

        M = self.A_inverse + disc_cov
        M = 0.5 * (M + M.T)
        self.M_factor, _ = jittered_cholesky(M)
        self.log_det_sources = float(sum(s.log_det for s in self.sources))

    @property
    def k(self) -> int:
        return len(self.sources)

    @property
    def n(self) -> int:
        return self.disc_cov.shape[0]

    def replace_source(self, l: int, source: SourceFactorization) -> "JointCovariance":
        sources = list(self.sources)
        sources[l] = source
        return JointCovariance(sources, self.disc_cov)

    def replace_discrepancy(self, disc_cov: np.ndarray) -> "JointCovariance":
        return JointCovariance(self.sources, disc_cov)

    def _reduce(self, residuals: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        residuals = np.atleast_2d(residuals)
        if residuals.shape != (self.k, self.n):
            raise DomainError(f"residuals must have shape {(self.k, self.n)}")
        q = 0.0
        b = np.zeros(self.n)
        for s, r in zip(self.sources, residuals):
            q += quad_form(s.factor, r)
            b += s.inverse @ r
        u = self.A_inverse @ b
        return q, b, u

    def log_density(self, residuals: np.ndarray) -> float:
        """Joint log-density of the k x n residual matrix with ``delta`` integrated out."""
        q, b, u = self._reduce(residuals)
        log_det_A_inv = -logdet(self.A_factor)
        log_det_M = logdet(self.M_factor)
        quad = q - float(b @ u) + quad_form(self.M_factor, u)
        return -0.5 * (
            self.k * self.n * LOG_2PI
            + self.log_det_sources
            - log_det_A_inv
            + log_det_M
            + quad
        )

    def discrepancy_posterior(self, residuals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of ``delta`` given all residuals."""
        _, _, u = self._reduce(residuals)
        mean = self.disc_cov @ cho_solve(self.M_factor, u)
        cov = self.A_inverse - self.A_inverse @ cho_solve(self.M_factor, self.A_inverse)
        return mean, 0.5 * (cov + cov.T)


def _forward_matrix(f_theta: np.ndarray, k: int, n: int) -> np.ndarray:
    f = np.asarray(f_theta, dtype=float)
    if f.ndim == 1:
        f = np.broadcast_to(f, (k, n))
    if f.shape != (k, n):
        raise DomainError(f"model outputs must have shape {(n,)} or {(k, n)}, got {f.shape}")
    return f


def residual_matrix(ds: MultiSourceDataset, f_theta: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``y_l - f_l(theta) - mu_l`` for every aligned source."""
    f = _forward_matrix(f_theta, ds.k, ds.n)
    return ds.outputs - f - np.asarray(mu, dtype=float)[:, None]


def _require_aligned(ds: MultiSourceDataset) -> None:
    if not validate_alignment(ds):
        raise AlignmentError(
            "the bias-separating model needs aligned sources; use the no-bias model instead"
        )


def source_factorizations(
    ds: MultiSourceDataset,
    state: ParameterState,
    bias_family: KernelFamily = KernelFamily.MATERN52,
    bias_roughness: Optional[List[float]] = None,
) -> List[SourceFactorization]:
    return [
        source_covariance(
            s.inputs,
            float(state.sigma2[l]),
            float(state.eta[l]),
            state.beta_bias[l],
            weights=s.weights,
            family=bias_family,
            roughness=bias_roughness,
        )
        for l, s in enumerate(ds.sources)
    ]


def discrepancy_covariance(
    discrepancy: DiscrepancyModel, inputs: np.ndarray, state: ParameterState
) -> Tuple[CorrelationMatrix, np.ndarray]:
    """Correlation ``R`` (or ``R_z``) and covariance ``tau2 R`` at the live parameters."""
    R = discrepancy_correlation(discrepancy, inputs, state.beta_disc)
    return R, state.tau2 * R.entries


def build_joint_covariance(
    ds: MultiSourceDataset,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
    bias_roughness: Optional[List[float]] = None,
) -> JointCovariance:
    _require_aligned(ds)
    _, C = discrepancy_covariance(discrepancy, ds.inputs, state)
    return JointCovariance(source_factorizations(ds, state, bias_family, bias_roughness), C)


def source_marginal(
    y_l: np.ndarray,
    f_theta: np.ndarray,
    state: ParameterState,
    l: int,
    delta: np.ndarray,
    inputs: np.ndarray,
    weights: Optional[np.ndarray] = None,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> float:
    """log N(y_l; f_l + mu_l 1 + delta, S_l) for a given discrepancy vector."""
    source = source_covariance(
        inputs,
        float(state.sigma2[l]),
        float(state.eta[l]),
        state.beta_bias[l],
        weights=weights,
        family=bias_family,
    )
    residual = np.asarray(y_l) - np.asarray(f_theta) - state.mu[l] - np.asarray(delta)
    return source.log_density(residual)


def posterior_discrepancy(
    ds: MultiSourceDataset,
    f_theta: np.ndarray,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> Tuple[np.ndarray, np.ndarray]:
    """Conditional mean and covariance of ``delta`` at the training inputs."""
    joint = build_joint_covariance(ds, state, discrepancy, bias_family)
    return joint.discrepancy_posterior(residual_matrix(ds, f_theta, state.mu))


def joint_marginal(
    ds: MultiSourceDataset,
    f_theta: np.ndarray,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> float:
    """Log-density of all k sources with discrepancy and biases integrated out."""
    joint = build_joint_covariance(ds, state, discrepancy, bias_family)
    return joint.log_density(residual_matrix(ds, f_theta, state.mu))


def concatenate_sources(ds: MultiSourceDataset) -> SourceObservations:
    """All sources as one long source, for the no-bias model on misaligned data."""
    return SourceObservations(
        inputs=np.vstack([s.inputs for s in ds.sources]),
        outputs=np.concatenate([s.outputs for s in ds.sources]),
        weights=np.concatenate([s.weight_vector for s in ds.sources]),
        label="concat",
    )


def nobias_joint_covariance(
    ds: MultiSourceDataset, state: ParameterState, discrepancy: DiscrepancyModel
) -> Tuple[JointCovariance, bool]:
    """Joint covariance of the no-bias model.

    Aligned data use k noise-only sources on the shared inputs; misaligned
    data are concatenated into a single source. Returns (joint, aligned).
    """
    noise = state.eta_disc * state.tau2
    if validate_alignment(ds):
        _, C = discrepancy_covariance(discrepancy, ds.inputs, state)
        sources = [noise_covariance(noise, s.weight_vector) for s in ds.sources]
        return JointCovariance(sources, C), True
    concat = concatenate_sources(ds)
    _, C = discrepancy_covariance(discrepancy, concat.inputs, state)
    return JointCovariance([noise_covariance(noise, concat.weight_vector)], C), False


def nobias_residuals(
    ds: MultiSourceDataset, f_rows: List[np.ndarray], mu: float, aligned: bool
) -> np.ndarray:
    """Residuals of the no-bias model; ``f_rows`` holds one model vector per source."""
    if aligned:
        return np.vstack([s.outputs - f - mu for s, f in zip(ds.sources, f_rows)])
    return np.concatenate([s.outputs - f - mu for s, f in zip(ds.sources, f_rows)])[None, :]


def nobias_marginal(
    ds: MultiSourceDataset,
    f_rows: List[np.ndarray],
    state: ParameterState,
    discrepancy: DiscrepancyModel,
) -> float:
    """Log-density of the model with a shared mean, shared noise and no per-source bias."""
    joint, aligned = nobias_joint_covariance(ds, state, discrepancy)
    return joint.log_density(nobias_residuals(ds, f_rows, float(state.mu[0]), aligned))


def _gaussian_logpdf(residual: np.ndarray, cov: np.ndarray) -> float:
    L, _ = jittered_cholesky(0.5 * (cov + cov.T))
    return -0.5 * (residual.size * LOG_2PI + logdet(L) + quad_form(L, residual))


def aggregated_marginal_full(
    stacked: SourceObservations,
    f_theta: np.ndarray,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> float:
    """Log-density of the stacked data under the full model.

    Mean ``f + mean(mu) 1``, covariance ``(1/k^2) sum_l S_l + tau2 R``.
    """
    k = state.mu.size
    cov = np.zeros((stacked.n, stacked.n))
    for l in range(k):
        cov += source_covariance(
            stacked.inputs,
            float(state.sigma2[l]),
            float(state.eta[l]),
            state.beta_bias[l],
            weights=stacked.weights,
            family=bias_family,
        ).cov
    cov /= k * k
    _, C = discrepancy_covariance(discrepancy, stacked.inputs, state)
    residual = stacked.outputs - np.asarray(f_theta) - float(np.mean(state.mu))
    return _gaussian_logpdf(residual, cov + C)


def aggregated_marginal_nobias(
    stacked: SourceObservations,
    f_theta: np.ndarray,
    mu: float,
    sigma2_0: float,
    tau2: float,
    R: CorrelationMatrix,
    k: int,
) -> float:
    """Log-density of stacked data under the no-bias model: ``(sigma2_0/k) I + tau2 R``."""
    if sigma2_0 < 0 or tau2 < 0 or k < 1:
        raise DomainError("sigma2_0 and tau2 must be non-negative and k positive")
    cov = tau2 * R.entries
    cov[np.diag_indices(R.n)] += sigma2_0 / k / stacked.weight_vector
    residual = stacked.outputs - np.asarray(f_theta) - mu
    return _gaussian_logpdf(residual, cov)


def decomposition_check(
    ds: MultiSourceDataset,
    f_theta: np.ndarray,
    delta: np.ndarray,
    mu: float,
    sigma2_0: float,
) -> Tuple[float, float, float]:
    """Full-data and stacked-data log-likelihoods given ``delta``, and the offset ``c``.

    ``l_full = c + l_stack`` with
    ``c = -(n(k-1)/2) log(2 pi sigma2_0) - (n/2) log k - sum_l |y_l - ybar|^2 / (2 sigma2_0)``.
    """
    if sigma2_0 <= 0:
        raise DomainError(f"sigma2_0 must be positive, got {sigma2_0}")
    _require_aligned(ds)
    k, n = ds.k, ds.n
    Y = ds.outputs
    ybar = np.mean(Y, axis=0)
    mean = np.asarray(f_theta) + mu + np.asarray(delta)

    l_full = -0.5 * (n * k * np.log(2.0 * np.pi * sigma2_0) + np.sum((Y - mean) ** 2) / sigma2_0)
    l_stack = -0.5 * (
        n * np.log(2.0 * np.pi * sigma2_0 / k) + k * np.sum((ybar - mean) ** 2) / sigma2_0
    )
    c = (
        -0.5 * n * (k - 1) * np.log(2.0 * np.pi * sigma2_0)
        - 0.5 * n * np.log(k)
        - np.sum((Y - ybar) ** 2) / (2.0 * sigma2_0)
    )
    return float(l_full), float(l_stack), float(c)
