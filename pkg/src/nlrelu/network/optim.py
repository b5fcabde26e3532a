"""Training configuration and the bias-corrected Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import ShapeError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 100
    iterations: int = 1500
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros(cls, params) -> "AdamState":
        names = params.trainable
        return cls({k: np.zeros_like(params[k]) for k in names},
                   {k: np.zeros_like(params[k]) for k in names}, 0)


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, beta1, beta2, step_size, inv_bc2, eps):
    for i in range(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= step_size * mi / (np.sqrt(vi * inv_bc2) + eps)


def adam_step(params, grads: dict, state: AdamState, config: TrainConfig):
    """One Adam update, in place on ``params`` and ``state``.

    ``theta -= lr * m_hat / (sqrt(v_hat) + eps)`` with
    ``m_hat = m / (1 - beta1**t)`` and ``v_hat = v / (1 - beta2**t)``.
    Returns ``(params, state)`` for convenience.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1**t
    bc2 = 1.0 - config.beta2**t
    step_size = config.learning_rate / bc1
    for k in params.trainable:
        p, g = params[k], grads[k]
        if p.shape != g.shape:
            raise ShapeError(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
        if not p.flags.c_contiguous:
            params[k] = p = np.ascontiguousarray(p)
        _adam_kernel(p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                     state.m[k].reshape(-1), state.v[k].reshape(-1),
                     config.beta1, config.beta2, step_size, 1.0 / bc2, config.eps)
    return params, state
