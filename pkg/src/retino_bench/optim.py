"""Adam optimizer and reduce-on-plateau learning-rate scheduling.

Adam keeps exponential moving averages of gradients (first moment) and
squared gradients (second moment), bias-corrects both, and scales the
learning rate per parameter by the corrected root second moment:

    t <- t + 1
    m <- beta1 * m + (1 - beta1) * g
    v <- beta2 * v + (1 - beta2) * g^2
    m_hat = m / (1 - beta1^t);  v_hat = v / (1 - beta2^t)
    p <- p - alpha * m_hat / (sqrt(v_hat) + epsilon)

The scheduler halves the learning rate whenever validation accuracy has not
improved by at least ``min_delta`` for ``patience`` consecutive epochs,
never dropping below ``min_lr``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradientError, ShapeMismatchError


@dataclass
class AdamState:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initialize(cls, params: dict[str, np.ndarray], alpha: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(
            alpha=alpha, beta1=beta1, beta2=beta2, epsilon=epsilon, t=0,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update. Moments are updated in place; new parameter arrays
    are returned so callers can hold on to the previous values."""
    if set(params) != set(grads):
        raise ShapeMismatchError(
            f"parameter/gradient name mismatch: {sorted(set(params) ^ set(grads))}"
        )
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}

    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient shape {g.shape} vs parameter {p.shape}", layer=name)
        if state.m[name].shape != p.shape:
            raise ShapeMismatchError("optimizer state shape drifted", layer=name)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    updated: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        updated[name] = p - state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return updated, state


@dataclass
class PlateauScheduler:
    factor: float = 0.5
    patience: int = 2
    min_delta: float = 1e-4
    min_lr: float = 1e-6
    best_seen: float = float("-inf")
    wait: int = 0

    def state_dict(self) -> dict:
        return {
            "factor": self.factor, "patience": self.patience,
            "min_delta": self.min_delta, "min_lr": self.min_lr,
            "best_seen": self.best_seen, "wait": self.wait,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "PlateauScheduler":
        return cls(**state)


def scheduler_update(sched: PlateauScheduler, epoch_val_accuracy: float, current_lr: float) -> float:
    """Advance the plateau tracker by one epoch; returns the new rate."""
    if epoch_val_accuracy > sched.best_seen + sched.min_delta:
        sched.best_seen = epoch_val_accuracy
        sched.wait = 0
        return current_lr
    sched.wait += 1
    if sched.wait >= sched.patience:
        sched.wait = 0
        return max(current_lr * sched.factor, sched.min_lr)
    return current_lr
