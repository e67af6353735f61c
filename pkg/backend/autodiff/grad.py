"""
Gradient entry points over parameter vectors.
"""

from typing import Callable, Dict, Tuple, Union

import numpy as np

from errors import ContractViolationError

from .params import ParamVector
from .tensor import Tensor

LossFn = Callable[[Dict[str, Union[Tensor, np.ndarray]]], Union[Tensor, float]]


def value_and_gradient(loss: LossFn, at: ParamVector) -> Tuple[float, np.ndarray]:
    """
    Evaluate ``loss`` on the blocks of ``at`` and its exact reverse-mode gradient.

    Args:
        loss: Function of the block view (name -> shaped Tensor) returning a scalar
        at: Point of evaluation

    Returns:
        Tuple of (loss value, gradient with the same layout as ``at.values``)
    """
    flat = Tensor(at.values.copy(), requires_grad=True)
    out = loss(at.view(flat))
    if not isinstance(out, Tensor):
        # Loss does not depend on any parameter.
        return float(np.asarray(out)), np.zeros_like(at.values)
    if out.value.size != 1:
        raise ContractViolationError("loss must be a scalar", shape=list(out.shape))
    out.backward()
    grad = flat.grad if flat.grad is not None else np.zeros_like(at.values)
    return float(out.value.reshape(())), grad


def gradient(loss: LossFn, at: ParamVector) -> np.ndarray:
    """Exact reverse-mode gradient of ``loss`` at ``at``."""
    return value_and_gradient(loss, at)[1]


def finite_difference_gradient(loss: LossFn, at: ParamVector, step: float = 1e-6) -> np.ndarray:
    """Central finite differences, evaluated untraced; used for gradient checks."""
    grad = np.zeros_like(at.values)
    for i in range(at.size):
        plus = at.values.copy()
        minus = at.values.copy()
        plus[i] += step
        minus[i] -= step
        f_plus = float(np.asarray(_untraced(loss(at.view(plus)))))
        f_minus = float(np.asarray(_untraced(loss(at.view(minus)))))
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def _untraced(x):
    return x.value if isinstance(x, Tensor) else x
