"""Finite-difference verification of reverse-mode gradients.

Checks run at float64; central differences are too noisy at float32 to
separate implementation bugs from roundoff.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor


def numerical_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar-valued ``f`` w.r.t. array ``x``."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        step = h * max(1.0, abs(orig))
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def gradcheck(fn, arrays, h: float = 1e-6) -> float:
    """Max relative error between reverse-mode and numerical gradients.

    ``fn`` maps Tensors to a scalar Tensor. Relative error per element is
    |a - n| / max(|a|, |n|, 1).
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = fn(*tensors)
        tape.backward(loss)

    worst = 0.0
    for idx, base in enumerate(arrays):
        def forward(xi, idx=idx):
            probe = [Tensor(a.copy()) for a in arrays]
            probe[idx] = Tensor(xi.copy())
            return fn(*probe).item()

        num = numerical_gradient(forward, base.copy(), h=h)
        ana = tensors[idx].grad
        assert ana is not None, f"no gradient reached input {idx}"
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1.0)
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst
