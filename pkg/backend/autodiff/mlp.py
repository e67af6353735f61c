"""
Implicit trajectory network: normalized time -> joint angles.

Time is lifted with sinusoidal features, passed through a small MLP, and the
raw outputs are squashed onto each DOF's [min, max] range with a sigmoid, so
every output respects the joint limits by construction.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from errors import ContractViolationError

from .tensor import Tensor, getitem, matmul, reshape, sigmoid, tanh, sin

logger = logging.getLogger(__name__)

ACTIVATIONS = {"tanh": tanh, "sin": sin}


@dataclass(frozen=True)
class MLPSpec:
    """Architecture of the trajectory network and the limits it squashes onto."""
    hidden: Tuple[int, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    fourier_pairs: int = 8
    activation: str = "tanh"
    input_dim: int = 1

    def __post_init__(self):
        if any(w <= 0 for w in self.hidden):
            raise ContractViolationError("hidden widths must be positive", hidden=list(self.hidden))
        if len(self.lower) != len(self.upper):
            raise ContractViolationError("lower/upper limit lengths differ")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ContractViolationError("every DOF needs min < max")
        if self.activation not in ACTIVATIONS:
            raise ContractViolationError(f"unknown activation '{self.activation}'")
        if self.input_dim != 1 or self.fourier_pairs < 0:
            raise ContractViolationError("input is normalized time (input_dim 1)")

    @classmethod
    def for_model(cls, model, hidden: Sequence[int] = (256, 256, 256),
                  fourier_pairs: int = 8, activation: str = "tanh") -> "MLPSpec":
        """Spec whose output dimension and limits come from a BodyModel."""
        lower, upper = model.limits()
        return cls(tuple(hidden), tuple(lower), tuple(upper), fourier_pairs, activation)

    @property
    def output_dim(self) -> int:
        return len(self.lower)

    @property
    def feature_dim(self) -> int:
        return 1 + 2 * self.fourier_pairs

    def check_model(self, model) -> None:
        """Raise unless the output dimension equals the model's DOF count."""
        if self.output_dim != model.dof_count:
            raise ContractViolationError(
                "MLP output_dim does not match model DOF count",
                output_dim=self.output_dim,
                dof_count=model.dof_count,
            )

    def layout(self) -> "OrderedDict[str, Tuple[int, ...]]":
        """Shapes of the weight and bias arrays in parameter order."""
        widths = [self.feature_dim, *self.hidden, self.output_dim]
        shapes = OrderedDict()
        for i in range(len(widths) - 1):
            shapes[f"W{i}"] = (widths[i], widths[i + 1])
            shapes[f"b{i}"] = (widths[i + 1],)
        return shapes

    @property
    def param_count(self) -> int:
        return int(sum(np.prod(s) for s in self.layout().values()))


def encode_time(t: np.ndarray, fourier_pairs: int) -> np.ndarray:
    """[t, sin(2^k pi t), cos(2^k pi t)] for k = 0..pairs-1 (geometric spacing)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    freqs = np.pi * 2.0 ** np.arange(fourier_pairs)
    phase = t * freqs[None, :]
    return np.concatenate([t, np.sin(phase), np.cos(phase)], axis=1)


def normalize_time(t: np.ndarray) -> np.ndarray:
    """Clamp normalized times into [0, 1], warning when anything was outside."""
    t = np.asarray(t, dtype=np.float64)
    if np.any((t < 0.0) | (t > 1.0)):
        logger.warning("normalized time outside [0, 1] clamped (min=%.4g, max=%.4g)", t.min(), t.max())
        t = np.clip(t, 0.0, 1.0)
    return t


def init_mlp_params(spec: MLPSpec, rng: np.random.Generator, output_gain: float = 0.1) -> np.ndarray:
    """Glorot-uniform weights, zero biases; the last layer is scaled down."""
    chunks = []
    layout = spec.layout()
    last = f"W{len(spec.hidden)}"
    for name, shape in layout.items():
        if name.startswith("b"):
            chunks.append(np.zeros(shape).ravel())
            continue
        limit = np.sqrt(6.0 / (shape[0] + shape[1]))
        w = rng.uniform(-limit, limit, size=shape)
        if name == last:
            w *= output_gain
        chunks.append(w.ravel())
    return np.concatenate(chunks)


def mlp_raw(spec: MLPSpec, phi: Union[Tensor, np.ndarray], t: np.ndarray):
    """Pre-squash network outputs z(t), shape (T, output_dim)."""
    h = encode_time(normalize_time(t), spec.fourier_pairs)
    act = ACTIVATIONS[spec.activation]
    n_layers = len(spec.hidden) + 1
    cursor = 0
    params: Dict[str, object] = {}
    for name, shape in spec.layout().items():
        size = int(np.prod(shape))
        params[name] = reshape(getitem(phi, slice(cursor, cursor + size)), shape)
        cursor += size
    if cursor != len(phi):
        raise ContractViolationError(
            "parameter block size does not match MLP layout", expected=cursor, got=len(phi)
        )
    for i in range(n_layers):
        h = matmul(h, params[f"W{i}"]) + params[f"b{i}"]
        if i < n_layers - 1:
            h = act(h)
    return h


def squash(spec: MLPSpec, z):
    """Map raw outputs onto [lower, upper] per DOF."""
    lower = np.asarray(spec.lower)
    span = np.asarray(spec.upper) - lower
    return lower + span * sigmoid(z)


def unsquash(spec: MLPSpec, theta: np.ndarray, margin: float = 1e-6) -> np.ndarray:
    """Inverse of ``squash`` for targets strictly inside the limits."""
    lower = np.asarray(spec.lower)
    span = np.asarray(spec.upper) - lower
    frac = np.clip((np.asarray(theta) - lower) / span, margin, 1.0 - margin)
    return np.log(frac) - np.log1p(-frac)


def mlp_eval(spec: MLPSpec, phi: Union[Tensor, np.ndarray], t) -> Union[Tensor, np.ndarray]:
    """
    Joint angles at normalized times ``t``.

    Args:
        spec: Network architecture and joint limits
        phi: Flat parameter block (traced or plain)
        t: Scalar or array of normalized times in [0, 1]

    Returns:
        Array of shape (T, dof) (or (dof,) for a scalar ``t``)
    """
    scalar = np.ndim(t) == 0
    theta = squash(spec, mlp_raw(spec, phi, np.atleast_1d(t)))
    if scalar:
        return getitem(theta, 0)
    return theta
