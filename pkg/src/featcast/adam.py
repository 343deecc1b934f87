"""Adam optimizer with bias correction, keyed to a Network's parameter list."""

from __future__ import annotations

import numpy as np


class Adam:
    """Standard Adam.  Moment arrays mirror the weight shapes; the step
    counter is shared and strictly increasing."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: list[tuple[str, np.ndarray, np.ndarray]]) -> None:
        """Apply one update to every (name, weight, gradient) triple in place."""
        for name, w, g in params:
            if w.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match weight shape {w.shape} for {name}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name}; update not applied")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, w, g in params:
            m = self._m.setdefault(name, np.zeros_like(w))
            v = self._v.setdefault(name, np.zeros_like(w))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            w -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
