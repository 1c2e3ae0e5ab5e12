"""Central finite-difference gradient verification."""
from __future__ import annotations

import numpy as np


def grad_check(fn, p0: np.ndarray, h: float = 1e-5):
    """Max relative error between an analytic gradient and central differences.

    fn(p, need_grad) returns (value, grad) when need_grad else (value, None).
    The error per coordinate is |analytic - central| / max(1e-12, |central|);
    the max over coordinates is returned together with both gradients.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    _, grad = fn(p0, True)
    grad = np.asarray(grad, dtype=np.float64).reshape(-1)
    central = np.zeros_like(grad)
    flat = p0.reshape(-1)
    for k in range(flat.size):
        dp = np.zeros_like(flat)
        dp[k] = h
        fp, _ = fn((flat + dp).reshape(p0.shape), False)
        fm, _ = fn((flat - dp).reshape(p0.shape), False)
        central[k] = (fp - fm) / (2.0 * h)
    denom = np.maximum(1e-12, np.abs(central))
    err = np.abs(grad - central) / denom
    return float(err.max()), grad, central
