"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Per-parameter moments plus the shared step counter."""

    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=0.005):
        return cls(
            lr=lr,
            m=[np.zeros_like(p.values) for p in params],
            v=[np.zeros_like(p.values) for p in params],
        )


def adam_step(params, grads, state: AdamState):
    """One Adam update; parameter values and state are modified in place."""
    if len(params) != len(state.m):
        raise ValueError("parameter count does not match optimizer state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.zeros_like(p.values) if g is None else np.asarray(g)
        if g.shape != p.values.shape:
            raise ValueError("gradient shape does not match parameter")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.values -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
