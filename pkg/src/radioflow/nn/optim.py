"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True, eq=False)
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, cfg: AdamConfig = AdamConfig()):
    """One update of every tensor in ``grads``. Returns ``(new params, new state)``.

    Inputs are not modified.
    """
    t = state.step + 1
    new_params, m_new, v_new = dict(params), {}, {}
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        m_new[name], v_new[name] = m, v
        new_params[name] = (p - lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)).astype(p.dtype)
    return new_params, AdamState(t, m_new, v_new)
