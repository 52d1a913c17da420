"""Adam, learning-rate and temperature schedules, and a gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import TemperaturePair


class ScheduleUsageError(ValueError):
    """Raised when a schedule is queried outside its epoch range."""


class NumericFailure(FloatingPointError):
    """NaN/Inf encountered during optimization; maps to exit code 3."""


@dataclass(frozen=True)
class TemperatureSchedule:
    """Exponential decay from t0 down to t_end over total_epochs.

    Per-temperature overrides: t2_init/t3_init replace t0 for that channel;
    t2_anneal/t3_anneal = False freezes the channel at its initial value.
    A channel starting at 0 stays at 0.
    """

    t0: float = 100.0
    t_end: float = 1e-3
    total_epochs: int = 2000
    law: str = "exponential"
    t2_init: float | None = None
    t3_init: float | None = None
    t2_anneal: bool = True
    t3_anneal: bool = True

    def __post_init__(self):
        if self.law != "exponential":
            raise ValueError(f"unknown annealing law {self.law!r}")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be positive")
        if not (self.t0 > self.t_end > 0):
            raise ValueError("need t0 > t_end > 0")

    def _channel(self, epoch: int, init: float | None, anneal: bool) -> float:
        t_init = self.t0 if init is None else init
        if not anneal or t_init == 0.0:
            return t_init
        gamma = (self.t_end / t_init) ** (1.0 / self.total_epochs)
        return t_init * gamma**epoch


def temperature_at(epoch: int, sched: TemperatureSchedule) -> TemperaturePair:
    """Temperatures at a given epoch, epoch 0 giving the initial values."""
    if not 0 <= epoch <= sched.total_epochs:
        raise ScheduleUsageError(
            f"epoch {epoch} outside [0, {sched.total_epochs}]")
    return TemperaturePair(
        t2=sched._channel(epoch, sched.t2_init, sched.t2_anneal),
        t3=sched._channel(epoch, sched.t3_init, sched.t3_anneal),
    )


def cosine_lr(epoch: int, total_epochs: int, lr0: float, lr_min: float = 0.0) -> float:
    """Cosine decay from lr0 at epoch 0 to lr_min at total_epochs."""
    if not 0 <= epoch <= total_epochs:
        raise ScheduleUsageError(f"epoch {epoch} outside [0, {total_epochs}]")
    if not lr0 >= lr_min >= 0:
        raise ScheduleUsageError("need lr0 >= lr_min >= 0")
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + np.cos(np.pi * epoch / total_epochs))


@dataclass
class AdamState:
    """First/second moment estimates plus step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n_params: int) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params))


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              lr: float) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update.  Returns (new state, new params)."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params/grads/state length mismatch")
    if not np.isfinite(np.sum(grads)):
        raise NumericFailure("non-finite gradient in adam_step")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m=m, v=v, t=t, beta1=state.beta1,
                          beta2=state.beta2, eps=state.eps)
    return new_state, new_params


def grad_check(loss, params: np.ndarray, rel_tol: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    `loss(p)` must return (value, gradient).  Step per coordinate is
    h = 1e-5 * max(1, |p_i|).  The discrepancy is scaled by
    max(1, |analytic|, |numeric|) so near-zero gradients do not blow up
    the ratio.  Returns the worst discrepancy; callers compare to rel_tol.
    """
    params = np.asarray(params, float)
    _, grad = loss(params)
    grad = np.asarray(grad, float)
    worst = 0.0
    for i in range(params.size):
        h = 1e-5 * max(1.0, abs(params[i]))
        p_plus = params.copy()
        p_plus[i] += h
        p_minus = params.copy()
        p_minus[i] -= h
        fd = (loss(p_plus)[0] - loss(p_minus)[0]) / (2.0 * h)
        scale = max(1.0, abs(grad[i]), abs(fd))
        worst = max(worst, abs(grad[i] - fd) / scale)
    return worst
