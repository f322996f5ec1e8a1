"""Adam optimizer with bias correction.

``adam_step`` is the bare update on named numpy arrays; ``Adam`` wraps a list
of named parameter tensors and drives ``adam_step`` from their ``.grad``
buffers. A non-finite gradient aborts the whole step and names the offending
parameter, leaving parameters and moments untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = ["AdamState", "adam_step", "Adam", "NonFiniteGradient"]


class NonFiniteGradient(RuntimeError):
    """A gradient contained NaN/inf; the step was not applied."""


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One in-place Adam update over name-matched parameter/gradient dicts."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}; step aborted")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment.setdefault(name, np.zeros_like(p))
        v = state.second_moment.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


class Adam:
    """Adam over named Tensor parameters; ``step()`` reads their .grad."""

    def __init__(self, params: list[tuple[str, Tensor]], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        names = [n for n, _ in params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names passed to Adam")
        self.params = params
        self.state = AdamState(learning_rate=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    @property
    def lr(self) -> float:
        return self.state.learning_rate

    @lr.setter
    def lr(self, value: float):
        self.state.learning_rate = value

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        live = [(n, p) for n, p in self.params if p.grad is not None]
        adam_step(
            {n: p.data for n, p in live},
            {n: p.grad for n, p in live},
            self.state,
        )
