"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment accumulators; zeros before the first step."""

    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(
    params: list[Tensor],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.99,
    eps: float = 1e-8,
) -> AdamState:
    """Apply one in-place Adam update to params given grads."""
    if len(params) != len(grads):
        raise ShapeError("params and grads length mismatch")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.data.shape}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


class Adam:
    """Convenience wrapper holding parameter groups with independent rates."""

    def __init__(self, groups: list[tuple[list[Tensor], float]],
                 beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.groups = [(list(params), lr) for params, lr in groups]
        self.states = [AdamState() for _ in self.groups]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self) -> None:
        for (params, lr), state in zip(self.groups, self.states):
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            adam_step(params, grads, state, lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for params, _ in self.groups:
            for p in params:
                p.grad = None
