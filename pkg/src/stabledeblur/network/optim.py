"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidParameterError


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, t: int, lr=1e-3, beta1=0.9,
              beta2=0.9, eps=1e-8) -> None:
    """Update ``params`` in place with step index ``t`` (1-based)."""
    if t < 1:
        raise InvalidParameterError(f"Adam step index must be >= 1, got {t}")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.t = t


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.9, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self, grads: dict) -> None:
        adam_step(self.params, grads, self.state, self.state.t + 1,
                  self.lr, self.beta1, self.beta2, self.eps)
