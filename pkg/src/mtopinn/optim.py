"""LAMB: Adam moments with a per-block trust ratio ||w|| / ||update||.

Parameters are handled as a list of numpy blocks (each weight matrix and
each bias vector is its own block).  ``lamb_step`` is functional: it returns
a new state and new blocks and never mutates its arguments.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DivergenceError


@dataclass(frozen=True)
class LambHyper:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-6
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class LambState:
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def fresh(cls, blocks):
        return cls(0, [np.zeros_like(b, dtype=np.float64) for b in blocks],
                   [np.zeros_like(b, dtype=np.float64) for b in blocks])


def reset(state):
    """Zero moments and step count, keeping the block shapes."""
    return LambState(0, [np.zeros_like(m) for m in state.m], [np.zeros_like(v) for v in state.v])


def lamb_step(state, params, grads, h):
    """One LAMB update.  Returns ``(new_state, new_params)``."""
    if len(params) != len(grads):
        raise ValueError("params and grads have different block counts")
    if not state.m:
        state = LambState.fresh(params)
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match the parameter blocks")
    t = state.step_count + 1
    bc1 = 1.0 - h.beta1 ** t
    bc2 = 1.0 - h.beta2 ** t
    new_m, new_v, new_p = [], [], []
    for w, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != np.shape(w):
            raise ValueError(f"gradient block shape {g.shape} != parameter shape {np.shape(w)}")
        if not np.isfinite(g).all():
            raise DivergenceError("non-finite gradient")
        m = h.beta1 * m + (1.0 - h.beta1) * g
        v = h.beta2 * v + (1.0 - h.beta2) * (g * g)
        u = (m / bc1) / (np.sqrt(v / bc2) + h.epsilon)
        if h.weight_decay:
            u = u + h.weight_decay * w
        w_norm = math.sqrt(float(np.vdot(w, w)))
        u_norm = math.sqrt(float(np.vdot(u, u)))
        trust = w_norm / u_norm if (w_norm > 0 and u_norm > 0) else 1.0
        new_p.append(w - (h.lr * trust) * u)
        new_m.append(m)
        new_v.append(v)
    return LambState(t, new_m, new_v), new_p
