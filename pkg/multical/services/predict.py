"""Predictive distributions of discrepancy, measurement bias, field data and reality."""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from multical.exceptions import DomainError
from multical.schemas.models import (
    DiscrepancyMode,
    DiscrepancyModel,
    KernelFamily,
    ModelType,
    MultiSourceDataset,
    ParameterState,
)
from multical.services.discrepancy import discrepancy_correlation, discrepancy_kernel
from multical.services.forward import ForwardModel
from multical.services.kernels import build_correlation_matrix, cross_correlation
from multical.services.likelihood import bias_kernel, source_covariance
from multical.services.problem import CalibrationProblem
from multical.utils.linalg import cho_solve, jittered_cholesky

logger = logging.getLogger(__name__)

NEGATIVE_VARIANCE_TOL = 1e-10
COMPONENTS = ("discrepancy", "bias", "field", "reality")

Prediction = Tuple[np.ndarray, np.ndarray]


def _as_points(x_star: np.ndarray, p: int) -> np.ndarray:
    x = np.asarray(x_star, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if x.size == p else x[:, None]
    if x.shape[1] != p:
        raise DomainError(f"prediction inputs must have {p} columns, got {x.shape[1]}")
    return x


def _design(inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    return inputs[:, None] if inputs.ndim == 1 else inputs


def clamp_variance(var: np.ndarray) -> np.ndarray:
    """Clip roundoff-negative variances to zero."""
    var = np.asarray(var, dtype=float)
    if np.any(var < -NEGATIVE_VARIANCE_TOL):
        logger.warning(f"⚠️ Clamping negative predictive variance {float(var.min()):.3e} to 0")
    return np.clip(var, 0.0, None)


def predict_discrepancy(
    x_star: np.ndarray,
    delta: np.ndarray,
    state: ParameterState,
    discrepancy: DiscrepancyModel,
    inputs: np.ndarray,
) -> Prediction:
    """Mean and variance of the discrepancy at new inputs given its training values.

    For S-GaSP the kernel is the scaled one: ``r_z = c (cI + R)^-1 r`` and
    ``K_z(x, x) = 1 - r' (cI + R)^-1 r`` with ``c = n / lambda_z``, and ``R_z``
    replaces ``R``.
    """
    inputs = _design(inputs)
    x = _as_points(x_star, inputs.shape[1])
    spec = discrepancy_kernel(discrepancy, state.beta_disc)
    R = build_correlation_matrix(spec, inputs)
    r = cross_correlation(spec, inputs, x)
    delta = np.asarray(delta, dtype=float)

    if discrepancy.mode == DiscrepancyMode.SGASP and discrepancy.lambda_z > 0:
        Rz = discrepancy_correlation(discrepancy, inputs, state.beta_disc)
        c = R.n / discrepancy.lambda_z
        LB, _ = jittered_cholesky(c * np.eye(R.n) + R.entries)
        Binv_r = cho_solve(LB, r)
        r_z = c * Binv_r
        k_star = 1.0 - np.sum(r * Binv_r, axis=0)
        factor = Rz.factor
    else:
        r_z = r
        k_star = np.ones(x.shape[0])
        factor = R.factor

    mean = r_z.T @ cho_solve(factor, delta)
    var = state.tau2 * (k_star - np.sum(r_z * cho_solve(factor, r_z), axis=0))
    return mean, clamp_variance(var)


def predict_bias(
    x_star: np.ndarray,
    l: int,
    delta: np.ndarray,
    ds: MultiSourceDataset,
    state: ParameterState,
    f_theta: np.ndarray,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> Prediction:
    """Mean and variance of source ``l``'s measurement bias at new inputs.

    ``f_theta`` is the model output of source ``l`` at its training inputs.
    """
    if not 0 <= l < ds.k:
        raise DomainError(f"source index {l} out of range for {ds.k} sources")
    src = ds.sources[l]
    x = _as_points(x_star, src.p)
    sigma2 = float(state.sigma2[l])
    S = source_covariance(
        src.inputs, sigma2, float(state.eta[l]), state.beta_bias[l], src.weights, bias_family
    )
    r = cross_correlation(bias_kernel(bias_family, state.beta_bias[l]), src.inputs, x)
    resid = src.outputs - np.asarray(f_theta) - state.mu[l] - np.asarray(delta)

    mean = sigma2 * r.T @ cho_solve(S.factor, resid)
    var = sigma2 * (1.0 - sigma2 * np.sum(r * cho_solve(S.factor, r), axis=0))
    return mean, clamp_variance(var)


def predict_field(
    x_star: np.ndarray,
    l: int,
    delta: np.ndarray,
    ds: MultiSourceDataset,
    state: ParameterState,
    forward: ForwardModel,
    discrepancy: DiscrepancyModel,
    bias_family: KernelFamily = KernelFamily.MATERN52,
) -> Prediction:
    """Field-data prediction for source ``l``: discrepancy + bias + model + mean, plus noise."""
    src = ds.sources[l]
    x = _as_points(x_star, src.p)
    f_train = forward.evaluate(state.theta, src.inputs, src.look_vector)
    d_mean, d_var = predict_discrepancy(x, delta, state, discrepancy, src.inputs)
    b_mean, b_var = predict_bias(x, l, delta, ds, state, f_train, bias_family)
    f_new = forward.evaluate(state.theta, x, src.look_vector)
    mean = d_mean + b_mean + f_new + state.mu[l]
    var = d_var + b_var + float(state.noise_variance[l])
    return mean, var


def predict_reality(
    x_star: np.ndarray,
    delta: np.ndarray,
    state: ParameterState,
    forward: ForwardModel,
    discrepancy: DiscrepancyModel,
    inputs: np.ndarray,
    look_vector: Optional[np.ndarray] = None,
) -> Prediction:
    """Reality ``f(x, theta) + delta(x)``; per-source means are not part of reality."""
    x = _as_points(x_star, _design(inputs).shape[1])
    d_mean, d_var = predict_discrepancy(x, delta, state, discrepancy, inputs)
    return forward.evaluate(state.theta, x, look_vector) + d_mean, d_var


def average_predictions(predictions: Sequence[Prediction]) -> Prediction:
    """Mean of means; mean of variances plus variance of means."""
    if not predictions:
        raise DomainError("no predictions to average")
    means = np.vstack([m for m, _ in predictions])
    variances = np.vstack([v for _, v in predictions])
    return means.mean(axis=0), variances.mean(axis=0) + means.var(axis=0)


def evaluate_mse(predictions: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared difference."""
    predictions = np.asarray(predictions, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if predictions.size != truth.size:
        raise DomainError(f"length mismatch: {predictions.size} vs {truth.size}")
    if predictions.size == 0:
        raise DomainError("cannot evaluate MSE of empty vectors")
    return float(np.mean((predictions - truth) ** 2))


class Predictor:
    """Predictions averaged over parameter states and their discrepancy vectors."""

    def __init__(
        self,
        problem: CalibrationProblem,
        states: List[ParameterState],
        deltas: Optional[List[np.ndarray]] = None,
    ):
        if not states:
            raise DomainError("at least one parameter state is required")
        self.problem = problem
        self.states = states
        if deltas is None:
            deltas = []
            for s in states:
                mean, _ = problem.discrepancy_posterior(problem.fit(s))
                deltas.append(mean)
        if len(deltas) != len(states):
            raise DomainError("need one discrepancy vector per state")
        self.deltas = deltas

    def _nobias_field(self, x, l, state, delta) -> Prediction:
        src = self.problem.ds.sources[l]
        d_mean, d_var = predict_discrepancy(
            x, delta, state, self.problem.discrepancy, self.problem.training_inputs
        )
        f_new = self.problem.forward.evaluate(state.theta, x, src.look_vector)
        return f_new + d_mean + state.mu[0], d_var + state.eta_disc * state.tau2

    def _one(self, x, component, l, state, delta) -> Prediction:
        pb = self.problem
        look = pb.ds.sources[l].look_vector if l is not None else None
        if component == "discrepancy":
            return predict_discrepancy(x, delta, state, pb.discrepancy, pb.training_inputs)
        if component == "reality":
            return predict_reality(
                x, delta, state, pb.forward, pb.discrepancy, pb.training_inputs, look
            )
        if pb.model_type == ModelType.NOBIAS:
            if component == "bias":
                raise DomainError("the no-bias model has no measurement bias to predict")
            return self._nobias_field(x, l, state, delta)
        if component == "bias":
            f_train = pb.forward.evaluate(state.theta, pb.ds.sources[l].inputs, look)
            return predict_bias(x, l, delta, pb.ds, state, f_train, pb.bias_family)
        return predict_field(x, l, delta, pb.ds, state, pb.forward, pb.discrepancy, pb.bias_family)

    def predict(self, x_star: np.ndarray, component: str, source: Optional[int] = None) -> Prediction:
        """Averaged prediction of ``component`` at ``x_star``; ``source`` is 0-based."""
        if component not in COMPONENTS:
            raise DomainError(f"unknown component {component!r}; choose from {COMPONENTS}")
        if component in ("bias", "field") and source is None:
            raise DomainError(f"component {component!r} needs a source index")
        x = _as_points(x_star, self.problem.p)
        preds = [
            self._one(x, component, source, s, d) for s, d in zip(self.states, self.deltas)
        ]
        return average_predictions(preds)
