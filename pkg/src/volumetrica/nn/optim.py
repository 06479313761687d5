"""Parameter update rules: plain SGD and bias-corrected Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SgdState:
    learning_rate: float


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter shapes."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate: float = 1e-3, **kwargs) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kwargs)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def optimizer_step(params, grads, state) -> list:
    """Apply one update in place; returns the parameter list."""
    if len(params) != len(grads):
        raise ValueError("params and grads must align")
    if isinstance(state, SgdState):
        for p, g in zip(params, grads):
            p -= state.learning_rate * g
        return params
    if isinstance(state, AdamState):
        if len(state.m) != len(params):
            raise ValueError("Adam state does not mirror the parameter list")
        state.step += 1
        c1 = 1.0 - state.beta1**state.step
        c2 = 1.0 - state.beta2**state.step
        for p, g, m, v in zip(params, grads, state.m, state.v):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        return params
    raise TypeError(f"unknown optimizer state {type(state)!r}")
