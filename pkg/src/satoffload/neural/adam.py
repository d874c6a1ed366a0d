"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Tensor], lr: float = 3e-4, **kw) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params], lr=lr, **kw)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState, ascent: bool = False) -> None:
    """Update ``params`` in place. ``ascent=True`` climbs the gradient."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    sign = 1.0 if ascent else -1.0
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter has {p.data.shape}")
        m = state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        v = state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        p.data = p.data + sign * state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class Adam:
    params: list[Tensor]
    lr: float = 3e-4
    ascent: bool = False
    state: AdamState = field(init=False)

    def __post_init__(self) -> None:
        self.state = AdamState.for_params(self.params, lr=self.lr)

    def step(self, grads: list[np.ndarray]) -> None:
        adam_step(self.params, grads, self.state, ascent=self.ascent)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    if max_norm is None:
        return grads
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total <= max_norm or total == 0:
        return grads
    return [g * (max_norm / total) for g in grads]
