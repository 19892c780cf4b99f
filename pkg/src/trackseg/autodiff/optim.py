"""Adam with a single-drop step schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Adam:
    """Standard Adam with bias correction and one multiplicative rate drop.

    The effective rate is ``lr`` through step ``decay_step`` and
    ``lr * decay_factor`` on every later step.
    """

    def __init__(self, params: dict[str, Tensor], lr=1e-4, betas=(0.9, 0.999), eps=1e-8,
                 decay_step=None, decay_factor=0.1):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.decay_step = decay_step
        self.decay_factor = float(decay_factor)
        self.step_count = 0
        self.m = {k: np.zeros_like(p.values) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in self.params.items()}

    def effective_lr(self, step=None) -> float:
        step = self.step_count if step is None else step
        if self.decay_step is not None and step > self.decay_step:
            return self.lr * self.decay_factor
        return self.lr

    def step(self):
        self.step_count += 1
        lr = self.effective_lr()
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.values -= (lr * update).astype(p.dtype, copy=False)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Optimizer state as flat named arrays (for checkpointing)."""
        out = {"opt.step": np.array([self.step_count], dtype=np.float32)}
        for name in self.params:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.step_count = int(arrays["opt.step"][0])
        for name in self.params:
            self.m[name] = arrays[f"opt.m.{name}"].astype(self.m[name].dtype).reshape(self.m[name].shape)
            self.v[name] = arrays[f"opt.v.{name}"].astype(self.v[name].dtype).reshape(self.v[name].shape)
