"""Bias-corrected Adam over flat parameter vectors.

Functional style: :func:`adam_step` returns a new state, so drivers can
keep, fork, or discard optimizer state freely (the hybrid strategy forks
a fresh state per candidate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError


@dataclass(frozen=True)
class AdamState:
    """Parameters plus first/second moment estimates after ``t`` steps."""

    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not (self.params.shape == self.m.shape == self.v.shape) or self.params.ndim != 1:
            raise ShapeError(
                f"params, m, v must be 1-D and equal length, got "
                f"{self.params.shape}, {self.m.shape}, {self.v.shape}"
            )
        if self.t < 0:
            raise ConfigurationError(f"step count must be >= 0, got {self.t}")
        if self.lr < 0:
            raise ConfigurationError(f"learning rate must be >= 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError(
                f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}"
            )
        if self.eps <= 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        if (self.v < 0).any():
            raise NumericError("second moment estimate went negative")


def adam_init(
    params: np.ndarray,
    lr: float = 0.05,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Fresh state with zero moments around the given parameters."""
    params = np.asarray(params, dtype=np.float64)
    return AdamState(
        params=params.copy(),
        m=np.zeros_like(params),
        v=np.zeros_like(params),
        t=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(state: AdamState, grad: np.ndarray) -> AdamState:
    """One bias-corrected update: params -= lr * m_hat / (sqrt(v_hat) + eps)."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.params.shape:
        raise ShapeError(f"gradient shape {grad.shape} does not match params {state.params.shape}")
    if not np.isfinite(grad).all():
        raise NumericError(f"non-finite gradient at step {state.t + 1}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad**2
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    params = state.params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(
        params=params,
        m=m,
        v=v,
        t=t,
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )
