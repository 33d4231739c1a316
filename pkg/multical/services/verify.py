"""Dense reference computations used to check the block-structured engine.

Everything here uses plain ``numpy.linalg`` (slogdet, solve, inv) and never the
Cholesky helpers of the engine, so agreement is an independent check.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from multical.exceptions import DomainError, NumericalSingularityError
from multical.schemas.models import (
    DiscrepancyMode,
    DiscrepancyModel,
    KernelFamily,
    KernelSpec,
    MultiSourceDataset,
    ParameterState,
    SourceObservations,
    SuiteResult,
)
from multical.services.discrepancy import scaling_density, transform_covariance
from multical.services.kernels import build_correlation_matrix, cross_correlation
from multical.services.likelihood import decomposition_check, joint_marginal, posterior_discrepancy
from multical.services.forward import get_forward_model
from multical.services.predict import predict_bias, predict_discrepancy, predict_field

logger = logging.getLogger(__name__)


def dense_mvn_logpdf(y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Gaussian log-density via slogdet and a dense solve."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise NumericalSingularityError("covariance is not symmetric")
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise NumericalSingularityError("covariance is not positive definite")
    r = y - mean
    return float(-0.5 * (y.size * np.log(2.0 * np.pi) + logdet + r @ np.linalg.solve(cov, r)))


def dense_gaussian_condition(
    mean: np.ndarray, cov: np.ndarray, observed_idx: Sequence[int], values: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Conditional mean and covariance of the unobserved block."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    obs = np.asarray(observed_idx, dtype=int)
    free = np.setdiff1d(np.arange(mean.size), obs)
    S_oo = cov[np.ix_(obs, obs)]
    S_fo = cov[np.ix_(free, obs)]
    gain = np.linalg.solve(S_oo, S_fo.T).T
    cond_mean = mean[free] + gain @ (np.asarray(values, dtype=float) - mean[obs])
    cond_cov = cov[np.ix_(free, free)] - gain @ S_fo.T
    return cond_mean, cond_cov


def ar1_inverse(n: int, rho: float) -> np.ndarray:
    """Explicit tridiagonal inverse of the exponential-kernel matrix on an even grid."""
    if n < 2:
        raise DomainError("n must be at least 2")
    if abs(rho) >= 1:
        raise DomainError(f"|rho| must be below 1, got {rho}")
    out = np.zeros((n, n))
    idx = np.arange(n)
    out[idx, idx] = 1.0 + rho * rho
    out[0, 0] = out[-1, -1] = 1.0
    out[idx[:-1], idx[1:]] = -rho
    out[idx[1:], idx[:-1]] = -rho
    return out / (1.0 - rho * rho)


def limiting_mle_variance(tau2: float, gamma: float) -> float:
    """Limiting variance ``2 tau2 gamma / (2 gamma + 1)`` of the mean estimator."""
    if tau2 <= 0 or gamma <= 0:
        raise DomainError("tau2 and gamma must be positive")
    return 2.0 * tau2 * gamma / (2.0 * gamma + 1.0)


def integrate_density(density: Callable[[float], float], upper: float) -> float:
    """Adaptive quadrature of a density over [0, upper]."""
    value, _ = integrate.quad(density, 0.0, upper, limit=200, epsabs=1e-12, epsrel=1e-10)
    return float(value)


# --------------------------------------------------------------- dense models


def dense_scaled_correlation(R: np.ndarray, lambda_z: float, n: int) -> np.ndarray:
    """``(R^-1 + (lambda/n) I)^-1`` by explicit inversion."""
    if lambda_z == 0:
        return R.copy()
    return np.linalg.inv(np.linalg.inv(R) + (lambda_z / n) * np.eye(R.shape[0]))


def _disc_corr(discrepancy: DiscrepancyModel, inputs, beta) -> np.ndarray:
    spec = KernelSpec(
        family=discrepancy.kernel.family,
        inverse_ranges=list(beta),
        roughness=discrepancy.kernel.roughness,
    )
    R = cross_correlation(spec, inputs, inputs)
    if discrepancy.mode == DiscrepancyMode.SGASP:
        return dense_scaled_correlation(R, discrepancy.lambda_z, R.shape[0])
    return R


def _bias_cov(src: SourceObservations, state: ParameterState, l: int, family) -> np.ndarray:
    spec = KernelSpec(family=family, inverse_ranges=list(state.beta_bias[l]))
    R = cross_correlation(spec, src.inputs, src.inputs)
    return state.sigma2[l] * R + np.diag(state.eta[l] * state.sigma2[l] / src.weight_vector)


def dense_joint_covariance(
    ds: MultiSourceDataset,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> np.ndarray:
    """``tau2 (1 1') kron R + blockdiag(S_1, ..., S_k)`` as a kn x kn matrix."""
    R = _disc_corr(discrepancy, ds.inputs, state.beta_disc)
    cov = np.kron(np.ones((ds.k, ds.k)), state.tau2 * R)
    n = ds.n
    for l, src in enumerate(ds.sources):
        cov[l * n:(l + 1) * n, l * n:(l + 1) * n] += _bias_cov(src, state, l, bias_family)
    return cov


def dense_joint_logpdf(
    ds: MultiSourceDataset,
    f_theta: np.ndarray,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> float:
    f = np.broadcast_to(np.asarray(f_theta, dtype=float), (ds.k, ds.n))
    mean = (f + state.mu[:, None]).ravel()
    cov = dense_joint_covariance(ds, state, discrepancy, bias_family)
    return dense_mvn_logpdf(ds.outputs.ravel(), mean, cov)


def dense_posterior_discrepancy(
    ds: MultiSourceDataset,
    f_theta: np.ndarray,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior of the discrepancy by conditioning the joint law of (delta, all data)."""
    f = np.broadcast_to(np.asarray(f_theta, dtype=float), (ds.k, ds.n))
    n, k = ds.n, ds.k
    C = state.tau2 * _disc_corr(discrepancy, ds.inputs, state.beta_disc)
    V = dense_joint_covariance(ds, state, discrepancy, bias_family)
    joint = np.zeros((n + k * n, n + k * n))
    joint[:n, :n] = C
    joint[:n, n:] = np.tile(C, (1, k))
    joint[n:, :n] = np.tile(C, (k, 1))
    joint[n:, n:] = V
    mean = np.concatenate([np.zeros(n), (f + state.mu[:, None]).ravel()])
    return dense_gaussian_condition(mean, joint, np.arange(n, n + k * n), ds.outputs.ravel())


def _dense_disc_cov(
    x_star: np.ndarray, state: ParameterState, discrepancy: DiscrepancyModel, inputs: np.ndarray
) -> np.ndarray:
    """Discrepancy covariance over the stacked (training, new) inputs."""
    spec = KernelSpec(
        family=discrepancy.kernel.family,
        inverse_ranges=list(state.beta_disc),
        roughness=discrepancy.kernel.roughness,
    )
    X = np.vstack([inputs, x_star])
    n = inputs.shape[0]
    K = cross_correlation(spec, X, X)
    if discrepancy.mode == DiscrepancyMode.SGASP and discrepancy.lambda_z > 0:
        c = n / discrepancy.lambda_z
        r = K[:n, :]
        K = K - r.T @ np.linalg.solve(c * np.eye(n) + K[:n, :n], r)
    return state.tau2 * K


def dense_discrepancy_prediction(
    x_star: np.ndarray,
    delta: np.ndarray,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    inputs: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Condition the joint (training + new) discrepancy law on its training values."""
    cov = _dense_disc_cov(x_star, state, discrepancy, inputs)
    n = inputs.shape[0]
    m, cond = dense_gaussian_condition(np.zeros(cov.shape[0]), cov, np.arange(n), delta)
    return m, np.diag(cond)


def dense_field_prediction(
    x_star: np.ndarray,
    l: int,
    delta: np.ndarray,
    ds: MultiSourceDataset,
    state: ParameterState,
    f_train: np.ndarray,
    f_star: np.ndarray,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> Tuple[np.ndarray, np.ndarray]:
    """Source ``l``'s field at new inputs given the discrepancy and all k sources.

    Builds the joint law of (delta, the stacked kn observations, y_l at the new
    inputs) and conditions on the first two blocks.
    """
    n, k, m = ds.n, ds.k, x_star.shape[0]
    D = _dense_disc_cov(x_star, state, discrepancy, ds.inputs)
    C, C_ts, C_ss = D[:n, :n], D[:n, n:], D[n:, n:]

    spec = KernelSpec(family=bias_family, inverse_ranges=list(state.beta_bias[l]))
    B = state.sigma2[l] * cross_correlation(spec, np.vstack([ds.inputs, x_star]), x_star)
    B_ts, B_ss = B[:n], B[n:]

    size = n + k * n + m
    joint = np.zeros((size, size))
    obs = slice(n, n + k * n)
    new = slice(n + k * n, size)
    joint[:n, :n] = C
    joint[:n, obs] = np.tile(C, (1, k))
    joint[obs, :n] = np.tile(C, (k, 1))
    joint[obs, obs] = dense_joint_covariance(ds, state, discrepancy, bias_family)
    cross = np.tile(C_ts, (k, 1))
    cross[l * n:(l + 1) * n] += B_ts
    joint[obs, new] = cross
    joint[new, obs] = cross.T
    joint[:n, new] = C_ts
    joint[new, :n] = C_ts.T
    joint[new, new] = C_ss + B_ss + state.noise_variance[l] * np.eye(m)

    f = np.broadcast_to(np.asarray(f_train, dtype=float), (k, n))
    mean = np.concatenate(
        [np.zeros(n), (f + state.mu[:, None]).ravel(), np.asarray(f_star) + state.mu[l]]
    )
    values = np.concatenate([delta, ds.outputs.ravel()])
    cond_mean, cond_cov = dense_gaussian_condition(mean, joint, np.arange(n + k * n), values)
    return cond_mean, np.diag(cond_cov)


def dense_bias_prediction(
    x_star: np.ndarray,
    l: int,
    delta: np.ndarray,
    ds: MultiSourceDataset,
    state: ParameterState,
    f_theta: np.ndarray,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> Tuple[np.ndarray, np.ndarray]:
    """Condition the joint law of (bias + noise at training, bias at new inputs)."""
    src = ds.sources[l]
    n = src.n
    spec = KernelSpec(family=bias_family, inverse_ranges=list(state.beta_bias[l]))
    X = np.vstack([src.inputs, x_star])
    K = state.sigma2[l] * cross_correlation(spec, X, X)
    K[:n, :n] += np.diag(state.eta[l] * state.sigma2[l] / src.weight_vector)
    resid = src.outputs - f_theta - state.mu[l] - delta
    m, cov = dense_gaussian_condition(np.zeros(X.shape[0]), K, np.arange(n), resid)
    return m, np.diag(cov)


# ----------------------------------------------------------- random instances


def _random_design(rng: np.random.Generator, n: int, p: int) -> np.ndarray:
    """Jittered grid in one dimension, uniform points otherwise."""
    if p == 1:
        return ((np.arange(n) + rng.uniform(0.2, 0.8, n)) / n)[:, None]
    return rng.uniform(0.0, 1.0, size=(n, p))


def random_instance(
    rng: np.random.Generator,
    n: int,
    k: int,
    p: int = 1,
    mode: DiscrepancyMode = DiscrepancyMode.GASP,
    lambda_z: Optional[float] = None,
    family: KernelFamily = KernelFamily.MATERN52,
) -> Tuple[MultiSourceDataset, np.ndarray, ParameterState, DiscrepancyModel]:
    """Aligned dataset, model output, parameter state and discrepancy drawn at random.

    Inverse ranges are kept large enough for the correlation matrices to stay
    well conditioned, so engine and dense answers agree to roundoff.
    """
    inputs = _random_design(rng, n, p)
    f = np.sin(3.0 * inputs[:, 0])
    sources = [
        SourceObservations(inputs=inputs.copy(), outputs=f + rng.normal(0.0, 0.5, n), label=f"s{l}")
        for l in range(k)
    ]
    ds = MultiSourceDataset(sources=sources, aligned=True)
    state = ParameterState(
        theta=[1.0],
        mu=rng.normal(0.0, 0.2, k),
        sigma2=rng.uniform(0.2, 1.0, k),
        beta_bias=rng.uniform(3.0, 10.0, (k, p)),
        eta=rng.uniform(0.05, 0.5, k),
        tau2=float(rng.uniform(0.3, 1.5)),
        beta_disc=rng.uniform(5.0, 15.0, p),
    )
    lam = 0.0
    if mode == DiscrepancyMode.SGASP:
        lam = float(rng.uniform(5.0, 100.0)) if lambda_z is None else lambda_z
    disc = DiscrepancyModel(
        mode=mode, lambda_z=lam, kernel=KernelSpec(family=family, inverse_ranges=[1.0] * p)
    )
    return ds, f, state, disc


# --------------------------------------------------------------------- suites


def _suite(name: str, errors: List[float], tol: float) -> SuiteResult:
    worst = float(max(errors)) if errors else 0.0
    passed = bool(errors) and worst <= tol
    logger.info(f"{'✅' if passed else '❌'} {name}: max error {worst:.3e} (tol {tol:.0e})")
    return SuiteResult(name=name, passed=passed, max_error=worst, tolerance=tol, n_cases=len(errors))


def _max_abs(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def block_likelihood_suite(rng: np.random.Generator, n_cases: int) -> SuiteResult:
    errors = []
    for i in range(n_cases):
        mode = DiscrepancyMode.SGASP if i % 2 else DiscrepancyMode.GASP
        ds, f, state, disc = random_instance(
            rng, int(rng.integers(2, 16)), int(rng.integers(1, 5)), mode=mode
        )
        errors.append(abs(joint_marginal(ds, f, state, disc) - dense_joint_logpdf(ds, f, state, disc)))
    return _suite("block_likelihood", errors, 1e-8)


def stack_decomposition_suite(rng: np.random.Generator, n_cases: int) -> SuiteResult:
    """Dense full-data likelihood minus the offset equals the dense stacked likelihood."""
    errors = []
    for _ in range(n_cases):
        n, k = int(rng.integers(2, 51)), int(rng.integers(1, 11))
        ds, f, _, _ = random_instance(rng, n, k)
        delta = rng.normal(0.0, 0.3, n)
        mu = float(rng.normal(0.0, 0.5))
        s2 = float(rng.uniform(0.05, 2.0))
        mean = f + mu + delta
        l_full, l_stack, c = decomposition_check(ds, f, delta, mu, s2)
        dense_full = dense_mvn_logpdf(
            ds.outputs.ravel(), np.tile(mean, k), s2 * np.eye(n * k)
        )
        dense_stack = dense_mvn_logpdf(ds.outputs.mean(axis=0), mean, (s2 / k) * np.eye(n))
        errors.append(max(abs(dense_full - c - dense_stack), abs(l_full - c - l_stack)))
    return _suite("stack_decomposition", errors, 1e-9)


def predictive_suite(rng: np.random.Generator, n_cases: int) -> SuiteResult:
    """Predictive laws and the discrepancy posterior against dense conditioning."""
    forward = get_forward_model("toy_sine")
    errors = []
    for i in range(max(n_cases // 2, 1)):
        mode = DiscrepancyMode.SGASP if i % 2 else DiscrepancyMode.GASP
        ds, f, state, disc = random_instance(
            rng, int(rng.integers(2, 13)), int(rng.integers(1, 4)), mode=mode
        )
        delta = rng.normal(0.0, 0.5, ds.n)
        x_star = rng.uniform(0.0, 1.0, (3, 1))
        m, v = predict_discrepancy(x_star, delta, state, disc, ds.inputs)
        dm, dv = dense_discrepancy_prediction(x_star, delta, state, disc, ds.inputs)
        errors.append(max(_max_abs(m, dm), _max_abs(v, np.clip(dv, 0, None))))
        m, v = predict_bias(x_star, 0, delta, ds, state, f)
        dm, dv = dense_bias_prediction(x_star, 0, delta, ds, state, f)
        errors.append(max(_max_abs(m, dm), _max_abs(v, np.clip(dv, 0, None))))
        pm, pc = posterior_discrepancy(ds, f, state, disc)
        om, oc = dense_posterior_discrepancy(ds, f, state, disc)
        errors.append(max(_max_abs(pm, om), _max_abs(pc, oc)))
        l = int(rng.integers(0, ds.k))
        m, v = predict_field(x_star, l, delta, ds, state, forward, disc)
        dm, dv = dense_field_prediction(
            x_star, l, delta, ds, state,
            forward.evaluate(state.theta, ds.inputs), forward.evaluate(state.theta, x_star), disc,
        )
        errors.append(max(_max_abs(m, dm), _max_abs(v, np.clip(dv, 0, None))))
    return _suite("predictive", errors, 1e-9)


def sgasp_reduction_suite(rng: np.random.Generator, n_cases: int) -> SuiteResult:
    """S-GaSP with ``lambda_z = 0`` reproduces GaSP exactly."""
    errors = []
    for _ in range(max(n_cases // 2, 1)):
        ds, f, state, disc = random_instance(rng, int(rng.integers(2, 13)), int(rng.integers(1, 4)))
        zero = disc.model_copy(update={"mode": DiscrepancyMode.SGASP, "lambda_z": 0.0})
        errors.append(abs(joint_marginal(ds, f, state, zero) - joint_marginal(ds, f, state, disc)))
    return _suite("sgasp_reduction", errors, 1e-12)


def sgasp_shrinkage_suite(rng: np.random.Generator, n_cases: int) -> SuiteResult:
    """``R - R_z`` is positive semidefinite; the error is the most negative eigenvalue."""
    errors = []
    for _ in range(max(n_cases // 2, 1)):
        n = int(rng.integers(2, 16))
        spec = KernelSpec(family=KernelFamily.MATERN52, inverse_ranges=[float(rng.uniform(5, 15))])
        R = build_correlation_matrix(spec, _random_design(rng, n, 1))
        Rz = transform_covariance(R, float(rng.uniform(1.0, 200.0)), n)
        errors.append(max(0.0, -float(np.min(np.linalg.eigvalsh(R.entries - Rz.entries)))))
    return _suite("sgasp_shrinkage", errors, 1e-10)


def ar1_inverse_suite() -> SuiteResult:
    errors = []
    for n in (2, 5, 50):
        gamma = 0.1
        rho = float(np.exp(-1.0 / (n * gamma)))
        grid = np.arange(1, n + 1) / n
        spec = KernelSpec(family=KernelFamily.EXPONENTIAL, inverse_ranges=[1.0 / gamma])
        R = cross_correlation(spec, grid, grid)
        errors.append(_max_abs(R @ ar1_inverse(n, rho), np.eye(n)))
    return _suite("ar1_inverse", errors, 1e-10)


def scaling_density_suite(rng: np.random.Generator) -> SuiteResult:
    """The mean-squared-discrepancy density integrates to one."""
    errors = []
    for _ in range(5):
        tau2, lam, vol = rng.uniform(0.1, 2.0), rng.uniform(1.0, 100.0), rng.uniform(0.5, 2.0)
        mean = 2.0 * tau2 * vol / lam
        total = integrate_density(lambda z: scaling_density(z, tau2, lam, vol), 50.0 * mean)
        errors.append(abs(total - 1.0))
    return _suite("scaling_density", errors, 1e-6)


def run_suites(seed: int = 0, n_cases: int = 100) -> List[SuiteResult]:
    """Run every oracle identity suite; each result reports the worst discrepancy."""
    if n_cases < 1:
        raise DomainError("n_cases must be positive")
    rng = np.random.default_rng(seed)
    logger.info(f"🔍 Running verification suites (seed={seed}, cases={n_cases})")
    return [
        block_likelihood_suite(rng, n_cases),
        stack_decomposition_suite(rng, n_cases),
        predictive_suite(rng, n_cases),
        sgasp_reduction_suite(rng, n_cases),
        sgasp_shrinkage_suite(rng, n_cases),
        ar1_inverse_suite(),
        scaling_density_suite(rng),
    ]
