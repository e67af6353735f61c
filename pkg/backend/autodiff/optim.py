"""
Adam optimizer over flat parameter vectors, plus the cosine learning-rate schedule.

    m(t) = b1 * m(t-1) + (1 - b1) * g
    v(t) = b2 * v(t-1) + (1 - b2) * g**2
    theta(t) = theta(t-1) - lr * m_hat / (sqrt(v_hat) + eps)
"""

import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from errors import ContractViolationError

from .params import ParamVector


@dataclass(frozen=True)
class AdamState:
    """First/second moments and hyper-parameters; owned by a single optimizer loop."""
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, lr, beta1, beta2, eps)

    def with_lr(self, lr: float) -> "AdamState":
        return replace(self, lr=lr)


def adam_step(state: AdamState, params: ParamVector, grad: np.ndarray) -> Tuple[ParamVector, AdamState]:
    """
    One bias-corrected Adam update.

    Args:
        state: Current optimizer state
        params: Current parameters
        grad: Gradient at ``params``

    Returns:
        Tuple of (updated parameters, updated state)
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape or state.m.shape != params.values.shape:
        raise ContractViolationError(
            "shape mismatch in adam_step",
            params=list(params.values.shape),
            grad=list(grad.shape),
            moments=list(state.m.shape),
        )
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    values = params.values - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params.with_values(values), replace(state, m=m, v=v, step=step)


def cosine_lr(base_lr: float, min_lr: float, step: int, total_steps: int) -> float:
    """Cosine decay from ``base_lr`` at step 0 to ``min_lr`` at ``total_steps``."""
    if total_steps <= 0:
        return base_lr
    progress = min(max(step / total_steps, 0.0), 1.0)
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * progress))
