"""Binary cross-entropy loss, the Adadelta update, and a finite-difference checker."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError

BCE_CLAMP = 1e-7


@dataclass
class LossReport:
    value: float
    gradient: np.ndarray


def bce_loss(pred: np.ndarray, target: np.ndarray) -> LossReport:
    """Mean binary cross-entropy over all elements, with its gradient.

    Predictions are clamped to [BCE_CLAMP, 1 - BCE_CLAMP] before the logs;
    the gradient is zero where the clamp is active.
    """
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"bce_loss: pred shape {pred.shape} != target shape {target.shape}")
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    value = float(-np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p)))
    grad = (p - target) / (p * (1.0 - p)) / pred.size
    grad = np.where((pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP), grad, 0.0)
    return LossReport(value=value, gradient=grad.astype(pred.dtype))


@dataclass
class AdadeltaState:
    """Per-parameter accumulators E[g^2] and E[dx^2]."""

    acc_grad: np.ndarray
    acc_update: np.ndarray
    rho: float = 0.95
    eps: float = 1e-6
    lr_scale: float = 1.0

    @classmethod
    def zeros_like(cls, param: np.ndarray, rho: float = 0.95, eps: float = 1e-6,
                   lr_scale: float = 1.0) -> "AdadeltaState":
        return cls(
            acc_grad=np.zeros_like(param),
            acc_update=np.zeros_like(param),
            rho=rho,
            eps=eps,
            lr_scale=lr_scale,
        )


def adadelta_step(param: np.ndarray, grad: np.ndarray, state: AdadeltaState) -> np.ndarray:
    """One Adadelta update; mutates state accumulators and returns the new parameter.

    E[g^2] <- rho E[g^2] + (1-rho) g^2
    dx      = -sqrt(E[dx^2]+eps) / sqrt(E[g^2]+eps) * g
    E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
    x       <- x + lr_scale * dx
    """
    if grad.shape != param.shape:
        raise ShapeMismatchError(f"adadelta: grad shape {grad.shape} != param shape {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("adadelta: non-finite gradient, step refused")
    rho = state.rho
    state.acc_grad *= rho
    state.acc_grad += (1.0 - rho) * grad * grad
    dx = -np.sqrt(state.acc_update + state.eps) / np.sqrt(state.acc_grad + state.eps) * grad
    state.acc_update *= rho
    state.acc_update += (1.0 - rho) * dx * dx
    return param + state.lr_scale * dx


def finite_diff_check(f, x: np.ndarray, analytic_grad: np.ndarray, h: float = 1e-4) -> float:
    """Max relative error between analytic_grad and central differences of f at x.

    f must be a pure scalar function of x; run in float64. The relative error
    denominator is max(|analytic|, |numeric|, 1e-8) per element.
    """
    if analytic_grad.shape != x.shape:
        raise ShapeMismatchError(
            f"finite_diff_check: grad shape {analytic_grad.shape} != x shape {x.shape}"
        )
    x = np.asarray(x, dtype=np.float64)
    worst = 0.0
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        fp, fm = float(f(xp)), float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"finite_diff_check: non-finite f at index {idx}")
        num = (fp - fm) / (2.0 * h)
        ana = float(analytic_grad[idx])
        denom = max(abs(num), abs(ana), 1e-8)
        worst = max(worst, abs(num - ana) / denom)
    return worst
