"""Forward models: Mogi point source with line-of-sight projection, and analytic toys.

Mogi displacement rates are computed in m/s and converted to m/yr with the
Julian year (``SECONDS_PER_YEAR``) in ``MogiModel.evaluate`` and ``mogi_los``.
"""
import logging
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Tuple, Type, Union

import numpy as np

from multical.exceptions import DomainError, NumericalSingularityError
from multical.schemas.models import MogiParams

logger = logging.getLogger(__name__)

SECONDS_PER_YEAR = 31_557_600.0
UNIT_NORM_TOL = 1e-12
VERTICAL_LOOK = np.array([0.0, 0.0, 1.0])

MOGI_BOUNDS: List[Tuple[float, float]] = [
    (-2000.0, 3000.0),
    (-2000.0, 5000.0),
    (500.0, 6000.0),
    (0.0, 0.15),
    (0.25, 0.33),
]


def _mogi_array(params: Union[MogiParams, np.ndarray]) -> np.ndarray:
    if isinstance(params, MogiParams):
        return params.as_array()
    arr = np.asarray(params, dtype=float)
    if arr.shape != (5,):
        raise DomainError(f"Mogi parameters must be a 5-vector, got shape {arr.shape}")
    return arr


def mogi_displacement_3d(params: Union[MogiParams, np.ndarray], x: np.ndarray) -> np.ndarray:
    """East, north and up displacement rates (m/s) at surface points.

    ``x`` is a 2-vector or an n x 2 array; the result is a 3-vector or n x 3.
    """
    x0, y0, depth, dv, nu = _mogi_array(params)
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 2 or not np.all(np.isfinite(pts)):
        raise DomainError("surface coordinates must be finite 2-vectors")

    dx = pts[:, 0] - x0
    dy = pts[:, 1] - y0
    R = np.sqrt(dx * dx + dy * dy + depth * depth)
    if np.any(R == 0):
        raise NumericalSingularityError("surface point coincides with the point source")

    c = (1.0 - nu) * dv / (np.pi * R**3)
    u = np.column_stack([c * dx, c * dy, c * depth])
    return u[0] if single else u


def _check_look(look: np.ndarray) -> np.ndarray:
    look = np.asarray(look, dtype=float)
    if look.shape != (3,) or abs(np.linalg.norm(look) - 1.0) > UNIT_NORM_TOL:
        raise DomainError("look vector must be a unit 3-vector")
    return look


def project_los(u: np.ndarray, look: np.ndarray) -> Union[float, np.ndarray]:
    """Dot product of displacement(s) with the unit look vector."""
    look = _check_look(look)
    u = np.asarray(u, dtype=float)
    out = u @ look
    return float(out) if u.ndim == 1 else out


def mogi_los(
    params: Union[MogiParams, np.ndarray], inputs: np.ndarray, look: Optional[np.ndarray] = None
) -> np.ndarray:
    """Line-of-sight velocity in m/yr; vertical when no look vector is given."""
    look = VERTICAL_LOOK if look is None else look
    u = mogi_displacement_3d(params, np.atleast_2d(inputs))
    return project_los(u, look) * SECONDS_PER_YEAR


def toy_sine(theta, x):
    """sin(theta * x)."""
    return np.sin(np.asarray(theta) * np.asarray(x))


def toy_mean(theta, x):
    """Constant model returning theta at every input."""
    return np.broadcast_to(np.asarray(theta, dtype=float), np.shape(x)).astype(float)


def toy_trig2d(theta, x):
    """theta_1 + theta_2 * sin(5 x_1) for x in [0, 1]^2."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    x1 = x[..., 0]
    return theta[0] + theta[1] * np.sin(5.0 * x1)


def lim_reality(x):
    """Reality for the two-input example: ((30 + 5 x1 sin(5 x1))(4 + exp(-5 x2)) - 100) / 6."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return ((30.0 + 5.0 * x1 * np.sin(5.0 * x1)) * (4.0 + np.exp(-5.0 * x2)) - 100.0) / 6.0


class ForwardModel(ABC):
    """Uniform forward-model contract ``evaluate(theta, inputs, look_vector) -> n-vector``."""

    name: str = ""
    param_names: List[str] = []
    bounds: List[Tuple[float, float]] = []
    input_dim: int = 1

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def _inputs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if inputs.shape[1] != self.input_dim:
            raise DomainError(
                f"{self.name} expects {self.input_dim} input columns, got {inputs.shape[1]}"
            )
        return inputs

    def _theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.n_params,):
            raise DomainError(f"{self.name} expects {self.n_params} parameters, got {theta.shape}")
        return theta

    @abstractmethod
    def evaluate(
        self, theta, inputs: np.ndarray, look_vector: Optional[np.ndarray] = None
    ) -> np.ndarray:
        """Model output at every input row."""
        pass


class MogiModel(ForwardModel):
    """Mogi source projected on the look vector, in m/yr."""

    name = "mogi"
    param_names = ["x", "y", "depth", "dv", "nu"]
    bounds = MOGI_BOUNDS
    input_dim = 2

    def evaluate(self, theta, inputs, look_vector=None):
        return mogi_los(self._theta(theta), self._inputs(inputs), look_vector)


class ToySineModel(ForwardModel):
    name = "toy_sine"
    param_names = ["theta"]
    bounds = [(0.0, 3.0)]
    input_dim = 1

    def evaluate(self, theta, inputs, look_vector=None):
        return toy_sine(self._theta(theta)[0], self._inputs(inputs)[:, 0])


class ToyMeanModel(ForwardModel):
    name = "toy_mean"
    param_names = ["theta"]
    bounds = [(-100.0, 100.0)]
    input_dim = 1

    def evaluate(self, theta, inputs, look_vector=None):
        return toy_mean(self._theta(theta)[0], self._inputs(inputs)[:, 0])


class ToyTrig2dModel(ForwardModel):
    name = "toy_trig2d"
    param_names = ["theta_1", "theta_2"]
    bounds = [(-100.0, 100.0), (-100.0, 100.0)]
    input_dim = 2

    def evaluate(self, theta, inputs, look_vector=None):
        return toy_trig2d(self._theta(theta), self._inputs(inputs))


_REGISTRY: Dict[str, Type[ForwardModel]] = {
    "mogi": MogiModel,
    "toy_sine": ToySineModel,
    "toy_mean": ToyMeanModel,
    "toy_trig2d": ToyTrig2dModel,
}


def available_models() -> List[str]:
    return sorted(_REGISTRY)


def get_forward_model(name: str) -> ForwardModel:
    """Forward model instance by registry name."""
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise DomainError(f"unknown forward model {name!r}; choose from {available_models()}")
