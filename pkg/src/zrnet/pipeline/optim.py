"""Adam with an optional linear learning-rate decay."""

from __future__ import annotations

from typing import Dict

import numpy as np


class Adam:
    def __init__(self, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 decay_steps: int = 0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay_steps = decay_steps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def current_lr(self) -> float:
        """Learning rate for the next step; decays linearly to zero over ``decay_steps``."""
        if self.decay_steps <= 0:
            return self.lr
        return self.lr * max(0.0, 1.0 - self.t / self.decay_steps)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        lr = self.current_lr()
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        updated = {}
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                updated[name] = p
                continue
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            if lr == 0.0:
                updated[name] = p
            else:
                updated[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return updated
