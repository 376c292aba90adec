from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .params import Parameter


@dataclass
class AdamState:
    """Adam moments plus the learning-rate schedule.

    The effective rate at a given epoch is ``base_lr / (1 + decay_po * epoch)``.
    """

    base_lr: float = 0.001
    decay_po: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def learning_rate(self, epoch: int) -> float:
        return self.base_lr / (1.0 + self.decay_po * epoch)


def adam_step(params: Iterable[Parameter], state: AdamState, epoch: int) -> None:
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {p.name}")
    state.step_count += 1
    t = state.step_count
    lr = state.learning_rate(epoch)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        m = state.first_moment.get(p.name)
        if m is None:
            m = state.first_moment[p.name] = np.zeros_like(p.value)
            state.second_moment[p.name] = np.zeros_like(p.value)
        v = state.second_moment[p.name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * (p.grad * p.grad)
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
