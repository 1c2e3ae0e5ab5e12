"""Bias-corrected Adam with finite-value guards."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteGradient, ShapeMismatch


@dataclass
class AdamState:
    """Parameters plus first/second moment estimates."""

    params: np.ndarray
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if self.m is None:
            self.m = np.zeros_like(self.params)
        if self.v is None:
            self.v = np.zeros_like(self.params)
        if self.m.shape != self.params.shape or self.v.shape != self.params.shape:
            raise ShapeMismatch("moment shapes must match the parameter shape")


def adam_step(state: AdamState, grad: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One update; returns the new state and its parameters."""
    g = np.asarray(grad, dtype=float)
    if g.shape != state.params.shape:
        raise ShapeMismatch(f"gradient shape {g.shape} != {state.params.shape}")
    if not np.isfinite(g).all():
        raise NonFiniteGradient("adam_step received a non-finite gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    params = state.params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    assert np.isfinite(params).all()
    new = AdamState(params=params, lr=state.lr, beta1=state.beta1,
                    beta2=state.beta2, eps=state.eps, step=t, m=m, v=v)
    return new, params
