"""Adam and the warmup + cosine learning-rate schedule."""
from __future__ import annotations

import math

import numpy as np


def lr_at(step, total_steps, lr=5e-4, warm_fraction=0.3):
    """Linear ramp ``0 -> lr`` over the warm steps, then one cosine decay to 0 at the last step."""
    warm = int(warm_fraction * total_steps)
    if step < warm:
        return lr * step / warm
    span = total_steps - 1 - warm
    if span <= 0:
        return lr
    progress = min((step - warm) / span, 1.0)
    return lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class Adam:
    """Adam with bias correction, updating :class:`~psnerv.numerics.Parameter` values in place."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8):
        self.betas = tuple(betas)
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in params}
        self.v = {p.name: np.zeros_like(p.value) for p in params}

    def step(self, params, lr):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p in params:
            g = p.grad
            m = self.m[p.name]
            v = self.v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.value -= update.astype(p.value.dtype, copy=False)


def adam_step(params, state, lr):
    """Functional spelling of :meth:`Adam.step`; ``state`` is an :class:`Adam`."""
    state.step(params, lr)
    return params, state
