"""Parameter update rules: plain SGD and bias-corrected Adam.

Both operate on flat lists of parameter tensors and return fresh arrays;
callers re-attach them to the model. Updates preserve the parameter dtype.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .training import TrainConfig


def _check_aligned(params, grads) -> None:
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameter tensors vs {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"parameter shape {p.shape} does not match gradient shape {g.shape}")


def sgd_step(params, grads, learning_rate: float):
    """theta <- theta - lr * g, elementwise."""
    _check_aligned(params, grads)
    return [p - learning_rate * g for p, g in zip(params, grads)]


@dataclass
class AdamState:
    """First and second moment estimates, one pair per parameter tensor."""

    m: list
    v: list

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, step_count: int, config: "TrainConfig"):
    """One bias-corrected Adam update; step_count is 1-based.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2;
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
    Returns (new params, new state).
    """
    if step_count < 1:
        raise ValueError(f"step_count must be >= 1, got {step_count}")
    _check_aligned(params, grads)
    _check_aligned(params, state.m)

    b1, b2 = config.beta1, config.beta2
    new_m = [b1 * m + (1.0 - b1) * g for m, g in zip(state.m, grads)]
    new_v = [b2 * v + (1.0 - b2) * g * g for v, g in zip(state.v, grads)]
    m_corr = 1.0 - b1 ** step_count
    v_corr = 1.0 - b2 ** step_count
    new_params = [
        p - config.learning_rate * (m / m_corr) / (np.sqrt(v / v_corr) + config.epsilon)
        for p, m, v in zip(params, new_m, new_v)
    ]
    return new_params, AdamState(new_m, new_v)
