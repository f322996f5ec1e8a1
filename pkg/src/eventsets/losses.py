"""Training objectives: binary cross-entropy, Dice, Huber, and their blend.

The Dice form uses one shared denominator summed over all target dimensions,
which is what makes it symmetric in (prediction, target) and tolerant of
sparse positives. BCE defaults to the negative log-likelihood; a literal
linear-probability variant (one minus the mean assigned probability) shares
the same optimum and is kept behind a flag for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

__all__ = ["LossConfig", "bce_loss", "dice_loss", "huber_loss", "combined_loss"]

_CLAMP = 1e-7


@dataclass
class LossConfig:
    lambda1: float = 0.85  # BCE
    lambda2: float = 1.0   # Dice
    lambda3: float = 0.2   # Huber
    dice_epsilon: float = 0.1
    huber_delta: float = 1.0
    bce_form: str = "nll"  # "nll" | "linear"
    kl_weight: float = 1e-5

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.dice_epsilon <= 0 or self.huber_delta <= 0:
            raise ValueError("dice_epsilon and huber_delta must be positive")
        if self.bce_form not in ("nll", "linear"):
            raise ValueError(f"unknown bce_form {self.bce_form!r}")


def _check_pair(pred: Tensor, target: Tensor):
    if pred.data.shape != target.data.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")


def _clamp(pred: Tensor) -> Tensor:
    # In-graph clamp: values outside [eps, 1-eps] are shifted by a constant,
    # which keeps gradients identical to the identity inside the safe band.
    lo = np.minimum(pred.data - _CLAMP, 0.0)
    hi = np.maximum(pred.data - (1.0 - _CLAMP), 0.0)
    return pred - Tensor(lo) - Tensor(hi)


def bce_loss(pred, target, form: str = "nll") -> Tensor:
    """Mean element-wise binary cross-entropy of probabilities vs 0/1 targets."""
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    _check_pair(pred, target)
    p = _clamp(pred)
    y = target
    if form == "nll":
        return -T.tmean(y * T.log(p) + (1.0 - y) * T.log(1.0 - p))
    if form == "linear":
        return 1.0 - T.tmean(y * p + (1.0 - y) * (1.0 - p))
    raise ValueError(f"unknown bce form {form!r}")


def dice_loss(pred, target, epsilon: float = 0.1) -> Tensor:
    """1 - mean_d (2 p_d y_d + eps) / (sum_d' (p_d' + y_d') + eps)."""
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    _check_pair(pred, target)
    denom = T.tsum(pred + target) + epsilon
    terms = (pred * target * 2.0 + epsilon) / denom
    return 1.0 - T.tmean(terms)


def huber_loss(t_pred, t_true, delta: float = 1.0) -> Tensor:
    """Quadratic inside |diff| < delta, linear outside, C1 at the joint."""
    t_pred, t_true = T.as_tensor(t_pred), T.as_tensor(t_true)
    diff = t_pred - t_true
    a = np.abs(diff.data)
    quadratic = a < delta
    # Branch selection is data-dependent but constant within the step, so the
    # piecewise form is assembled from masks with plain tensor arithmetic.
    mask_q = Tensor(quadratic.astype(np.float64))
    mask_l = Tensor((~quadratic).astype(np.float64))
    sign = Tensor(np.sign(diff.data))
    quad = diff * diff * 0.5
    lin = (diff * sign - delta / 2.0) * delta
    return T.tmean(mask_q * quad + mask_l * lin)


def combined_loss(bce, dice, huber, config: LossConfig) -> Tensor:
    """lambda1 * BCE + lambda2 * Dice + lambda3 * Huber."""
    return (T.as_tensor(bce) * config.lambda1
            + T.as_tensor(dice) * config.lambda2
            + T.as_tensor(huber) * config.lambda3)
