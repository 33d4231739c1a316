"""Pydantic models for calibration inputs, parameters and results."""
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

UNIT_NORM_TOL = 1e-12


class KernelFamily(str, Enum):
    """One-dimensional correlation family."""
    POWER_EXPONENTIAL = "pow_exp"
    MATERN52 = "matern_5_2"
    EXPONENTIAL = "exp"


class DiscrepancyMode(str, Enum):
    """Discrepancy process type."""
    GASP = "gasp"
    SGASP = "sgasp"


class ModelType(str, Enum):
    """Whether each source carries its own measurement bias process."""
    BIAS = "bias"
    NOBIAS = "nobias"


def _as_float_array(value, ndim: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


class KernelSpec(BaseModel):
    """Product kernel: family plus per-dimension inverse ranges."""
    family: KernelFamily = KernelFamily.MATERN52
    inverse_ranges: List[float]
    roughness: Optional[List[float]] = None

    @field_validator("inverse_ranges")
    @classmethod
    def validate_inverse_ranges(cls, v: List[float]) -> List[float]:
        if len(v) == 0:
            raise ValueError("inverse_ranges must not be empty")
        if not all(np.isfinite(b) and b > 0 for b in v):
            raise ValueError("inverse_ranges must be finite and positive")
        return [float(b) for b in v]

    @model_validator(mode="after")
    def validate_roughness(self) -> "KernelSpec":
        if self.family == KernelFamily.POWER_EXPONENTIAL:
            if self.roughness is None:
                self.roughness = [1.9] * len(self.inverse_ranges)
            if len(self.roughness) != len(self.inverse_ranges):
                raise ValueError("roughness must have one entry per input dimension")
            if not all(0 < a <= 2 for a in self.roughness):
                raise ValueError("roughness must lie in (0, 2]")
        return self

    @property
    def dim(self) -> int:
        return len(self.inverse_ranges)

    @property
    def ranges(self) -> List[float]:
        return [1.0 / b for b in self.inverse_ranges]


class CorrelationMatrix(BaseModel):
    """Correlation matrix with its lower Cholesky factor.

    ``factor @ factor.T == entries + jitter_used * I``.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    entries: np.ndarray
    factor: np.ndarray
    log_det: float
    jitter_used: float = 0.0

    @property
    def n(self) -> int:
        return self.entries.shape[0]


class DiscrepancyModel(BaseModel):
    """GaSP or S-GaSP discrepancy with its kernel and default variance.

    ``kernel.inverse_ranges`` and ``tau2`` are starting or fixed values; during
    inference the live values sit in ``ParameterState``.
    """
    mode: DiscrepancyMode = DiscrepancyMode.GASP
    lambda_z: float = 0.0
    kernel: KernelSpec
    tau2: float = 1.0

    @field_validator("lambda_z")
    @classmethod
    def validate_lambda(cls, v: float) -> float:
        if not np.isfinite(v) or v < 0:
            raise ValueError("lambda_z must be finite and non-negative")
        return float(v)

    @field_validator("tau2")
    @classmethod
    def validate_tau2(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("tau2 must be positive")
        return float(v)

    @property
    def effective_lambda(self) -> float:
        return self.lambda_z if self.mode == DiscrepancyMode.SGASP else 0.0


class SourceObservations(BaseModel):
    """Observations of one source: n x p inputs and n outputs."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    inputs: np.ndarray
    outputs: np.ndarray
    look_vector: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    label: str = "source"

    @field_validator("inputs", mode="before")
    @classmethod
    def validate_inputs(cls, v) -> np.ndarray:
        arr = _as_float_array(v, 2, "inputs")
        if not np.all(np.isfinite(arr)):
            raise ValueError("inputs must be finite")
        return arr

    @field_validator("outputs", mode="before")
    @classmethod
    def validate_outputs(cls, v) -> np.ndarray:
        return _as_float_array(v, 1, "outputs")

    @field_validator("look_vector", mode="before")
    @classmethod
    def validate_look(cls, v) -> Optional[np.ndarray]:
        if v is None:
            return None
        arr = _as_float_array(v, 1, "look_vector")
        if arr.shape != (3,) or abs(np.linalg.norm(arr) - 1.0) > UNIT_NORM_TOL:
            raise ValueError("look_vector must be a unit 3-vector")
        return arr

    @field_validator("weights", mode="before")
    @classmethod
    def validate_weights(cls, v) -> Optional[np.ndarray]:
        if v is None:
            return None
        arr = _as_float_array(v, 1, "weights")
        if not np.all(arr > 0):
            raise ValueError("weights must be positive")
        return arr

    @model_validator(mode="after")
    def validate_lengths(self) -> "SourceObservations":
        n = self.inputs.shape[0]
        if self.outputs.shape[0] != n:
            raise ValueError(f"outputs length {self.outputs.shape[0]} != input rows {n}")
        if self.weights is not None and self.weights.shape[0] != n:
            raise ValueError("weights length must equal input rows")
        return self

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]

    @property
    def weight_vector(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights


class MultiSourceDataset(BaseModel):
    """k sources; ``aligned`` is set by ``validate_alignment``."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sources: List[SourceObservations]
    aligned: bool = False

    @property
    def k(self) -> int:
        return len(self.sources)

    @property
    def n(self) -> int:
        return self.sources[0].n

    @property
    def p(self) -> int:
        return self.sources[0].p

    @property
    def inputs(self) -> np.ndarray:
        """Shared inputs of an aligned dataset."""
        return self.sources[0].inputs

    @property
    def outputs(self) -> np.ndarray:
        """k x n output matrix of an aligned dataset."""
        return np.vstack([s.outputs for s in self.sources])


class GridImage(BaseModel):
    """Pixel grid; NaN marks missing pixels."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    origin: Tuple[float, float] = (0.0, 0.0)
    spacing: Tuple[float, float] = (1.0, 1.0)
    values: np.ndarray
    look_vector: Optional[np.ndarray] = None
    label: str = "image"

    @field_validator("spacing")
    @classmethod
    def validate_spacing(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if v[0] <= 0 or v[1] <= 0:
            raise ValueError("spacing components must be positive")
        return v

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v) -> np.ndarray:
        return _as_float_array(v, 2, "values")

    @property
    def mask(self) -> np.ndarray:
        """True where the pixel is observed."""
        return ~np.isnan(self.values)

    def coordinates(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Easting/northing (m) of pixel centres."""
        east = self.origin[0] + np.asarray(cols) * self.spacing[0]
        north = self.origin[1] + np.asarray(rows) * self.spacing[1]
        return np.column_stack([east, north])


class QuadtreeBox(BaseModel):
    """One averaged box; rows [row0, row1) and cols [col0, col1) of the grid."""
    center: Tuple[float, float]
    extent: Tuple[float, float]
    value: float
    n_pixels: int = Field(gt=0)
    row0: int
    row1: int
    col0: int
    col1: int


class QuadtreeImage(BaseModel):
    """Quadtree partition of a grid image."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    boxes: List[QuadtreeBox]
    total_pixels: int
    look_vector: Optional[np.ndarray] = None
    label: str = "quadtree"


class MogiParams(BaseModel):
    """Point pressure source: position (m), depth (m, positive down), volume rate (m^3/s), Poisson ratio."""
    x: float = Field(ge=-2000.0, le=3000.0)
    y: float = Field(ge=-2000.0, le=5000.0)
    depth: float = Field(ge=500.0, le=6000.0)
    dv: float = Field(ge=0.0, le=0.15)
    nu: float = Field(ge=0.25, le=0.33)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.depth, self.dv, self.nu])


class ParameterState(BaseModel):
    """Full parameter vector of the multi-source model.

    ``eta`` holds nuggets sigma2_0l / sigma2_l; ``eta_disc`` is the noise to
    discrepancy-variance ratio used only by the no-bias model.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    theta: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    beta_bias: np.ndarray
    eta: np.ndarray
    tau2: float
    beta_disc: np.ndarray
    eta_disc: float = 0.0

    @field_validator("theta", "mu", "sigma2", "eta", "beta_disc", mode="before")
    @classmethod
    def validate_vectors(cls, v) -> np.ndarray:
        return np.atleast_1d(np.asarray(v, dtype=float))

    @field_validator("beta_bias", mode="before")
    @classmethod
    def validate_beta_bias(cls, v) -> np.ndarray:
        arr = np.asarray(v, dtype=float)
        return arr.reshape(arr.shape[0], -1) if arr.size else arr.reshape(0, 0)

    @model_validator(mode="after")
    def validate_support(self) -> "ParameterState":
        if np.any(self.sigma2 <= 0):
            raise ValueError("sigma2 must be positive")
        if np.any(self.eta < 0) or self.eta_disc < 0:
            raise ValueError("nuggets must be non-negative")
        if not self.tau2 > 0:
            raise ValueError("tau2 must be positive")
        if np.any(self.beta_disc <= 0) or np.any(self.beta_bias <= 0):
            raise ValueError("inverse ranges must be positive")
        return self

    @property
    def noise_variance(self) -> np.ndarray:
        """Per-source noise variances sigma2_0l = eta_l * sigma2_l."""
        return self.eta * self.sigma2


class PriorSpec(BaseModel):
    """Box prior on theta plus JR prior constants.

    ``jr_a`` defaults to 1/2 - p; ``jr_c_*`` default to n^(-1/p) times the input range.
    """
    theta_bounds: List[Tuple[float, float]]
    jr_a: Optional[float] = None
    jr_b: float = Field(default=1.0, gt=0)
    jr_c_bias: Optional[List[float]] = None
    jr_c_disc: Optional[List[float]] = None

    @field_validator("theta_bounds")
    @classmethod
    def validate_bounds(cls, v: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        for lo, hi in v:
            if not lo < hi:
                raise ValueError(f"empty theta interval ({lo}, {hi})")
        return v

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.theta_bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.theta_bounds], dtype=float)


class McmcSettings(BaseModel):
    """Sampler settings; ``n_samples`` counts all iterations including burn-in."""
    n_samples: int = Field(default=5000, gt=0)
    burn_in: int = Field(default=1000, ge=0)
    thin: int = Field(default=10, ge=1)
    seed: int = 0
    proposal_scales: Optional[Dict[str, float]] = None
    adapt: bool = True
    adapt_target: float = Field(default=0.3, gt=0, lt=1)
    n_chains: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def validate_burn_in(self) -> "McmcSettings":
        if self.burn_in >= self.n_samples:
            raise ValueError("burn_in must be smaller than n_samples")
        return self


class PosteriorSamples(BaseModel):
    """Retained draws of every chain, stacked chain after chain."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    columns: List[str]
    draws: np.ndarray
    log_posterior: np.ndarray
    delta_draws: np.ndarray
    chain: np.ndarray
    acceptance: Dict[str, float]
    seed: int
    settings: McmcSettings
    states: List[ParameterState] = Field(default_factory=list)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


class StartRecord(BaseModel):
    """Outcome of one optimizer start."""
    start: int
    initial: List[float]
    final: List[float]
    log_likelihood: float
    converged: bool
    n_iterations: int
    message: str = ""


class MleResult(BaseModel):
    """Best optimizer start plus every start's record."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    state: ParameterState
    log_likelihood: float
    starts: List[StartRecord]
    seed: int

    @property
    def converged(self) -> List[bool]:
        return [s.converged for s in self.starts]


class CalibrationConfig(BaseModel):
    """Run configuration loaded from JSON and overridden by CLI flags."""
    schema_version: int = 1
    model: DiscrepancyMode = DiscrepancyMode.SGASP
    model_type: ModelType = ModelType.BIAS
    forward: str = "toy_sine"
    mode: str = "mle"
    kernel: KernelFamily = KernelFamily.MATERN52
    bias_kernel: KernelFamily = KernelFamily.MATERN52
    sgasp_c: float = Field(default=100.0, gt=0)
    estimate_mean: bool = True
    fixed_tau2: Optional[float] = None
    theta_bounds: Optional[List[Tuple[float, float]]] = None
    n_starts: int = Field(default=10, ge=1)
    samples: int = Field(default=5000, gt=0)
    burn_in: int = Field(default=1000, ge=0)
    thin: int = Field(default=10, ge=1)
    n_chains: int = Field(default=1, ge=1)
    seed: int = 0

    @field_validator("mode")
    @classmethod
    def validate_mode(cls, v: str) -> str:
        if v not in ("mle", "mcmc"):
            raise ValueError("mode must be 'mle' or 'mcmc'")
        return v


class RunManifest(BaseModel):
    """Header block written into every output file."""
    version: str
    command: str
    seed: Optional[int] = None
    config_hash: str
    schema_version: int = 1
    settings: Dict[str, object] = Field(default_factory=dict)


class SuiteResult(BaseModel):
    """Outcome of one oracle suite."""
    name: str
    passed: bool
    max_error: float
    tolerance: float
    n_cases: int
