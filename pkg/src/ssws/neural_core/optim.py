"""Adam optimizer with bias correction and the per-epoch annealing schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ssws.neural_core.params import Parameters


class NonFiniteGradientError(RuntimeError):
    """A NaN/inf gradient was seen; the optimizer step was rejected."""


@dataclass
class LearningRateSchedule:
    """Geometric annealing: rate(e) = initial_rate * anneal_factor ** e."""

    initial_rate: float = 5e-4
    anneal_factor: float = 0.836

    def rate(self, epoch: int) -> float:
        return self.initial_rate * self.anneal_factor ** epoch


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like their parameters."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def moments_for(self, name: str, like: np.ndarray):
        if name not in self.first_moment:
            self.first_moment[name] = np.zeros_like(like)
            self.second_moment[name] = np.zeros_like(like)
        return self.first_moment[name], self.second_moment[name]


def adam_step(params: Parameters, state: AdamState, rate: float, grads: dict | None = None) -> None:
    """One bias-corrected Adam update, in place.

    grads defaults to each parameter's accumulated .grad.  Any non-finite
    gradient rejects the whole step before any parameter or moment mutates.
    """
    if rate <= 0:
        raise ValueError(f"learning rate must be positive, got {rate}")
    updates = []
    for name, p in params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
        updates.append((name, p, np.asarray(g)))

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p, g in updates:
        m, v = state.moments_for(name, p.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= (rate * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype, copy=False)
