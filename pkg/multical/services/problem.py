"""Calibration problem: parameter layout, transforms, likelihood and prior.

Free parameters live on an unconstrained vector: logit for calibration
parameters inside their box, log for variances, inverse ranges and nuggets,
identity for means. Blocks of that vector are updated together by the sampler.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit, gammaln, logit

from multical.exceptions import AlignmentError, DomainError
from multical.schemas.models import (
    CalibrationConfig,
    DiscrepancyModel,
    KernelFamily,
    ModelType,
    MultiSourceDataset,
    ParameterState,
    PriorSpec,
)
from multical.services.data import validate_alignment
from multical.services.discrepancy import make_discrepancy
from multical.services.forward import ForwardModel, get_forward_model
from multical.services.likelihood import (
    JointCovariance,
    discrepancy_covariance,
    nobias_joint_covariance,
    nobias_residuals,
    source_covariance,
    source_factorizations,
)

logger = logging.getLogger(__name__)

LOGIT_CLIP = 20.0
LOG_CLIP = 30.0
VARIANCE_FLOOR = 1e-8


def jr_prior_logdensity(
    beta: Sequence[float], eta: float, a: float, b: float, C: Sequence[float]
) -> float:
    """Jointly robust log-prior of inverse ranges ``beta`` and nugget ``eta``.

    ``log c + a log(t) - b t`` with ``t = sum_t C_t beta_t + eta`` and
    ``c = p! b^(a+p+1) prod C_t / Gamma(a+p+1)``.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    C = np.atleast_1d(np.asarray(C, dtype=float))
    p = beta.size
    if C.size != p:
        raise DomainError(f"need {p} JR scale constants, got {C.size}")
    if b <= 0 or np.any(C <= 0) or a <= -1 - p:
        raise DomainError("JR prior requires b > 0, C_t > 0 and a > -1 - p")
    t = float(C @ beta + eta)
    if t <= 0:
        raise DomainError("JR prior requires sum C_t beta_t + eta > 0")
    log_c = gammaln(p + 1) + (a + p + 1) * np.log(b) + float(np.sum(np.log(C))) - gammaln(a + p + 1)
    return float(log_c + a * np.log(t) - b * t)


def default_jr_scales(inputs: np.ndarray) -> List[float]:
    """``C_t = n^(-1/p) |x_max - x_min|`` per input dimension."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    n, p = inputs.shape
    spans = inputs.max(axis=0) - inputs.min(axis=0)
    spans = np.where(spans > 0, spans, 1.0)
    return [float(s) for s in n ** (-1.0 / p) * spans]


def default_inverse_ranges(inputs: np.ndarray) -> np.ndarray:
    """One over the span of each input dimension."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    spans = inputs.max(axis=0) - inputs.min(axis=0)
    return 1.0 / np.where(spans > 0, spans, 1.0)


@dataclass(frozen=True)
class Coordinate:
    """One free scalar: its column name, state block, position and transform."""
    name: str
    attr: str
    index: tuple
    transform: str
    lower: float = 0.0
    upper: float = 1.0


@dataclass
class ModelFit:
    """Likelihood evaluation at one state with the pieces reused by later updates."""
    state: ParameterState
    joint: JointCovariance
    f_rows: List[np.ndarray]
    aligned: bool
    log_likelihood: float
    extras: Dict[str, object] = field(default_factory=dict)


class CalibrationProblem:
    """Data, forward model, discrepancy and priors of one calibration run."""

    def __init__(
        self,
        ds: MultiSourceDataset,
        forward: ForwardModel,
        discrepancy: DiscrepancyModel,
        prior: Optional[PriorSpec] = None,
        model_type: ModelType = ModelType.BIAS,
        bias_family: KernelFamily = KernelFamily.MATERN52,
        estimate_mean: bool = True,
        fixed: Optional[Dict[str, object]] = None,
    ):
        self.ds = ds
        self.forward = forward
        self.discrepancy = discrepancy
        self.model_type = model_type
        self.bias_family = bias_family
        self.estimate_mean = estimate_mean
        self.fixed = dict(fixed or {})

        self.aligned = validate_alignment(ds)
        if model_type == ModelType.BIAS and not self.aligned:
            raise AlignmentError("misaligned sources support only the no-bias model")

        self.prior = prior or PriorSpec(theta_bounds=list(forward.bounds))
        if len(self.prior.theta_bounds) != forward.n_params:
            raise DomainError(
                f"{forward.name} has {forward.n_params} parameters but "
                f"{len(self.prior.theta_bounds)} bounds were given"
            )

        all_inputs = np.vstack([s.inputs for s in ds.sources])
        self.p = all_inputs.shape[1]
        self.jr_a = self.prior.jr_a if self.prior.jr_a is not None else 0.5 - self.p
        self.jr_b = self.prior.jr_b
        self.jr_c_disc = self.prior.jr_c_disc or default_jr_scales(self.training_inputs)
        self.jr_c_bias = self.prior.jr_c_bias or default_jr_scales(ds.sources[0].inputs)

        self.coordinates = self._build_coordinates()
        self.blocks = self._build_blocks()

    @property
    def k(self) -> int:
        return self.ds.k

    @property
    def training_inputs(self) -> np.ndarray:
        """Inputs at which the discrepancy is represented."""
        if self.aligned:
            return self.ds.inputs
        return np.vstack([s.inputs for s in self.ds.sources])

    @property
    def n_mu(self) -> int:
        return self.k if self.model_type == ModelType.BIAS else 1

    # ------------------------------------------------------------------ layout

    def _build_coordinates(self) -> List[Coordinate]:
        coords: List[Coordinate] = []
        if "theta" not in self.fixed:
            for i, (lo, hi) in enumerate(self.prior.theta_bounds):
                coords.append(Coordinate(f"theta_{i + 1}", "theta", (i,), "logit", lo, hi))
        if self.estimate_mean and "mu" not in self.fixed:
            for l in range(self.n_mu):
                coords.append(Coordinate(f"mu_{l + 1}", "mu", (l,), "identity"))
        if self.model_type == ModelType.BIAS:
            for l in range(self.k):
                if "sigma2" not in self.fixed:
                    coords.append(Coordinate(f"sigma2_{l + 1}", "sigma2", (l,), "log"))
                if "beta_bias" not in self.fixed:
                    for t in range(self.p):
                        coords.append(
                            Coordinate(f"beta_bias_{l + 1}_{t + 1}", "beta_bias", (l, t), "log")
                        )
                if "eta" not in self.fixed:
                    coords.append(Coordinate(f"eta_{l + 1}", "eta", (l,), "log"))
        if "tau2" not in self.fixed:
            coords.append(Coordinate("tau2", "tau2", (), "log"))
        if "beta_disc" not in self.fixed:
            for t in range(self.p):
                coords.append(Coordinate(f"beta_disc_{t + 1}", "beta_disc", (t,), "log"))
        if self.model_type == ModelType.NOBIAS and "eta_disc" not in self.fixed:
            coords.append(Coordinate("eta_disc", "eta_disc", (), "log"))
        return coords

    def _build_blocks(self) -> Dict[str, List[int]]:
        blocks: Dict[str, List[int]] = {}
        for i, c in enumerate(self.coordinates):
            if c.attr == "theta":
                name = "theta"
            elif c.attr == "mu":
                name = "mu"
            elif c.attr in ("sigma2", "beta_bias", "eta"):
                name = f"source_{c.index[0] + 1}"
            else:
                name = "discrepancy"
            blocks.setdefault(name, []).append(i)
        return blocks

    @property
    def column_names(self) -> List[str]:
        return [c.name for c in self.coordinates]

    # -------------------------------------------------------------- transforms

    @staticmethod
    def _to_free(c: Coordinate, value: float) -> float:
        if c.transform == "log":
            return float(np.clip(np.log(value), -LOG_CLIP, LOG_CLIP))
        if c.transform == "logit":
            unit = (value - c.lower) / (c.upper - c.lower)
            return float(np.clip(logit(np.clip(unit, 0.0, 1.0)), -LOGIT_CLIP, LOGIT_CLIP))
        return float(value)

    @staticmethod
    def _from_free(c: Coordinate, x: float) -> float:
        if c.transform == "log":
            return float(np.exp(x))
        if c.transform == "logit":
            return float(c.lower + (c.upper - c.lower) * expit(x))
        return float(x)

    @staticmethod
    def _log_jacobian(c: Coordinate, x: float) -> float:
        if c.transform == "log":
            return float(x)
        if c.transform == "logit":
            return float(np.log(c.upper - c.lower) - np.logaddexp(0.0, x) - np.logaddexp(0.0, -x))
        return 0.0

    def free_bounds(self) -> List[tuple]:
        """Box on the free vector used by the optimizer."""
        out = []
        for c in self.coordinates:
            if c.transform == "log":
                out.append((-LOG_CLIP, LOG_CLIP))
            elif c.transform == "logit":
                out.append((-LOGIT_CLIP, LOGIT_CLIP))
            else:
                out.append((None, None))
        return out

    def to_vector(self, state: ParameterState) -> np.ndarray:
        """Free vector of a state."""
        out = np.empty(len(self.coordinates))
        for i, c in enumerate(self.coordinates):
            value = getattr(state, c.attr)
            value = value[c.index] if c.index else value
            out[i] = self._to_free(c, float(value))
        return out

    def to_state(self, x: np.ndarray, base: ParameterState) -> ParameterState:
        """State with the free coordinates of ``x`` placed over ``base``."""
        updates: Dict[str, object] = {}
        for i, c in enumerate(self.coordinates):
            value = self._from_free(c, float(x[i]))
            if not c.index:
                updates[c.attr] = value
                continue
            if c.attr not in updates:
                updates[c.attr] = np.array(getattr(base, c.attr), dtype=float, copy=True)
            updates[c.attr][c.index] = value
        return base.model_copy(update=updates)

    def natural_values(self, state: ParameterState) -> np.ndarray:
        """Free coordinates of a state on their natural scale, in column order."""
        out = np.empty(len(self.coordinates))
        for i, c in enumerate(self.coordinates):
            value = getattr(state, c.attr)
            out[i] = float(value[c.index]) if c.index else float(value)
        return out

    def log_jacobian(self, x: np.ndarray) -> float:
        return float(sum(self._log_jacobian(c, float(v)) for c, v in zip(self.coordinates, x)))

    # ----------------------------------------------------------- initial state

    def model_rows(self, theta: np.ndarray) -> List[np.ndarray]:
        """Forward model output per source, each with its own look vector."""
        return [self.forward.evaluate(theta, s.inputs, s.look_vector) for s in self.ds.sources]

    def initial_state(self) -> ParameterState:
        """Box centre for theta, sample statistics for means and variances."""
        lower, upper = self.prior.lower, self.prior.upper
        theta = np.asarray(self.fixed.get("theta", 0.5 * (lower + upper)), dtype=float)
        rows = self.model_rows(theta)
        resid = [s.outputs - f for s, f in zip(self.ds.sources, rows)]

        if self.estimate_mean:
            mu = np.array([float(np.mean(r)) for r in resid])
            if self.model_type == ModelType.NOBIAS:
                mu = np.array([float(np.mean(np.concatenate(resid)))])
        else:
            mu = np.zeros(self.n_mu)
        centred = [r - (mu[l] if self.model_type == ModelType.BIAS else mu[0]) for l, r in enumerate(resid)]

        sigma2 = np.array([max(float(np.var(r)), VARIANCE_FLOOR) for r in centred])
        if self.aligned:
            tau2 = max(float(np.var(np.mean(np.vstack(centred), axis=0))), VARIANCE_FLOOR)
        else:
            tau2 = max(float(np.var(np.concatenate(centred))), VARIANCE_FLOOR)

        beta = default_inverse_ranges(self.training_inputs)
        if self.model_type == ModelType.BIAS:
            beta_bias = np.tile(default_inverse_ranges(self.ds.sources[0].inputs), (self.k, 1))
            eta = np.full(self.k, 0.1)
        else:
            sigma2 = np.ones(0)
            beta_bias = np.ones((0, self.p))
            eta = np.ones(0)

        state = ParameterState(
            theta=theta,
            mu=mu,
            sigma2=sigma2,
            beta_bias=beta_bias,
            eta=eta,
            tau2=tau2,
            beta_disc=beta,
            eta_disc=0.1 if self.model_type == ModelType.NOBIAS else 0.0,
        )
        return self.apply_fixed(state)

    def apply_fixed(self, state: ParameterState) -> ParameterState:
        """Overwrite fixed blocks with their configured values."""
        updates = {}
        for name, value in self.fixed.items():
            current = getattr(state, name)
            if np.ndim(current) == 0:
                updates[name] = float(value)
            else:
                updates[name] = np.broadcast_to(
                    np.asarray(value, dtype=float), np.shape(current)
                ).copy()
        return state.model_copy(update=updates) if updates else state

    # -------------------------------------------------------------- likelihood

    def _residuals(self, fit_state: ParameterState, f_rows, aligned: bool) -> np.ndarray:
        if self.model_type == ModelType.BIAS:
            return np.vstack(
                [s.outputs - f - fit_state.mu[l] for l, (s, f) in enumerate(zip(self.ds.sources, f_rows))]
            )
        return nobias_residuals(self.ds, f_rows, float(fit_state.mu[0]), aligned)

    def _source(self, state: ParameterState, l: int):
        s = self.ds.sources[l]
        return source_covariance(
            s.inputs,
            float(state.sigma2[l]),
            float(state.eta[l]),
            state.beta_bias[l],
            weights=s.weights,
            family=self.bias_family,
        )

    def _full_joint(self, state: ParameterState):
        if self.model_type == ModelType.BIAS:
            _, C = discrepancy_covariance(self.discrepancy, self.ds.inputs, state)
            return JointCovariance(source_factorizations(self.ds, state, self.bias_family), C), True
        return nobias_joint_covariance(self.ds, state, self.discrepancy)

    def fit(
        self,
        state: ParameterState,
        block: Optional[str] = None,
        base: Optional[ModelFit] = None,
    ) -> ModelFit:
        """Log-likelihood at ``state``; with ``base`` and ``block`` only the changed pieces are rebuilt."""
        if base is None or block is None:
            joint, aligned = self._full_joint(state)
            f_rows = self.model_rows(state.theta)
        elif block == "theta":
            joint, aligned = base.joint, base.aligned
            f_rows = self.model_rows(state.theta)
        elif block == "mu":
            joint, aligned, f_rows = base.joint, base.aligned, base.f_rows
        elif block.startswith("source_"):
            l = int(block.split("_")[1]) - 1
            joint = base.joint.replace_source(l, self._source(state, l))
            aligned, f_rows = base.aligned, base.f_rows
        elif block == "discrepancy" and self.model_type == ModelType.BIAS:
            _, C = discrepancy_covariance(self.discrepancy, self.ds.inputs, state)
            joint = base.joint.replace_discrepancy(C)
            aligned, f_rows = base.aligned, base.f_rows
        else:
            joint, aligned = self._full_joint(state)
            f_rows = base.f_rows

        ll = joint.log_density(self._residuals(state, f_rows, aligned))
        return ModelFit(state=state, joint=joint, f_rows=f_rows, aligned=aligned, log_likelihood=ll)

    def log_likelihood(self, state: ParameterState) -> float:
        return self.fit(state).log_likelihood

    def discrepancy_posterior(self, fit: ModelFit):
        """Conditional mean and covariance of ``delta`` at ``training_inputs``."""
        return fit.joint.discrepancy_posterior(self._residuals(fit.state, fit.f_rows, fit.aligned))

    # ------------------------------------------------------------------- prior

    def log_prior(self, state: ParameterState) -> float:
        """Box prior on theta, flat on means, JR and 1/variance on covariance parameters."""
        theta = state.theta
        if np.any(theta < self.prior.lower) or np.any(theta > self.prior.upper):
            return -np.inf
        lp = 0.0
        if self.model_type == ModelType.BIAS:
            for l in range(self.k):
                lp += jr_prior_logdensity(
                    state.beta_bias[l], float(state.eta[l]), self.jr_a, self.jr_b, self.jr_c_bias
                )
                lp -= float(np.log(state.sigma2[l]))
            lp += jr_prior_logdensity(state.beta_disc, 0.0, self.jr_a, self.jr_b, self.jr_c_disc)
        else:
            lp += jr_prior_logdensity(
                state.beta_disc, state.eta_disc, self.jr_a, self.jr_b, self.jr_c_disc
            )
        lp -= float(np.log(state.tau2))
        return float(lp)

    def log_posterior(self, state: ParameterState, fit: Optional[ModelFit] = None) -> float:
        lp = self.log_prior(state)
        if not np.isfinite(lp):
            return -np.inf
        fit = fit or self.fit(state)
        return float(fit.log_likelihood + lp)


def problem_from_config(cfg: CalibrationConfig, ds: MultiSourceDataset) -> CalibrationProblem:
    """Calibration problem described by a run configuration."""
    forward = get_forward_model(cfg.forward)
    aligned = validate_alignment(ds)
    n_disc = ds.n if aligned else sum(s.n for s in ds.sources)
    discrepancy = make_discrepancy(cfg.model, n_disc, ds.p, cfg.kernel, c=cfg.sgasp_c)
    prior = PriorSpec(theta_bounds=cfg.theta_bounds or list(forward.bounds))
    fixed = {"tau2": cfg.fixed_tau2} if cfg.fixed_tau2 is not None else None
    logger.info(
        f"🔧 Problem: {cfg.model.value} discrepancy, {cfg.model_type.value} model, "
        f"forward={forward.name}, k={ds.k}, aligned={aligned}"
    )
    return CalibrationProblem(
        ds,
        forward,
        discrepancy,
        prior=prior,
        model_type=cfg.model_type,
        bias_family=cfg.bias_kernel,
        estimate_mean=cfg.estimate_mean,
        fixed=fixed,
    )
