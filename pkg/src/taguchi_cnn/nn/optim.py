"""SGD and Adam updates over the nested parameter lists used by ``model``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SGD:
    lr: float = 1e-3

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


@dataclass(frozen=True)
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


@dataclass
class OptimizerState:
    step: int = 0
    m: list | None = None
    v: list | None = None


def init_state(params, config) -> OptimizerState:
    if isinstance(config, Adam):
        zeros = lambda: [None if p is None else {k: np.zeros_like(a) for k, a in p.items()} for p in params]  # noqa: E731
        return OptimizerState(0, zeros(), zeros())
    return OptimizerState()


def optimizer_step(params, grads, state: OptimizerState, config):
    """Update ``params`` in place and return (params, state)."""
    state.step += 1
    if isinstance(config, SGD):
        for p, g in zip(params, grads):
            if p is None:
                continue
            for k in p:
                p[k] -= config.lr * g[k]
        return params, state

    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p is None:
            continue
        for k in p:
            m[k] *= b1
            m[k] += (1.0 - b1) * g[k]
            v[k] *= b2
            v[k] += (1.0 - b2) * g[k] ** 2
            p[k] -= config.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + config.eps)
    return params, state
