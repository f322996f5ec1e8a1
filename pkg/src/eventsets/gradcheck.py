"""Finite-difference gradient verification.

Central differences against the analytic backward pass; the relative error is
|analytic - numeric| / (|numeric| + 1e-8), maximized over coordinates. Every
loss and layer in this package is expected to pass at 1e-4.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, no_grad

__all__ = ["grad_check", "grad_check_params"]


def _eval_scalar(f: Callable[[Tensor], Tensor], x: np.ndarray) -> float:
    with no_grad():
        out = f(Tensor(x))
    val = out.item()
    if not np.isfinite(val):
        raise ValueError(f"function returned non-finite value {val!r} during gradient check")
    return val


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor; ``x`` is the point to check.
    """
    x0 = np.array(x, dtype=np.float64)
    leaf = Tensor(x0.copy(), requires_grad=True)
    out = f(leaf)
    if out.data.size != 1:
        raise ValueError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    if not np.isfinite(out.item()):
        raise ValueError("function value is non-finite at the check point")
    out.backward()
    analytic = np.zeros_like(x0) if leaf.grad is None else leaf.grad

    worst = 0.0
    flat = x0.reshape(-1)
    a_flat = analytic.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = _eval_scalar(f, x0)
        flat[i] = orig - h
        f_minus = _eval_scalar(f, x0)
        flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = abs(a_flat[i] - numeric) / (abs(numeric) + 1e-8)
        worst = max(worst, err)
    return worst


def grad_check_params(
    f: Callable[[], Tensor],
    param: Tensor,
    coords: list[tuple] | None = None,
    h: float = 1e-4,
    rng: np.random.Generator | None = None,
    n_coords: int = 10,
) -> float:
    """Spot-check d f / d param at selected coordinates of a live parameter.

    ``f`` is a zero-argument closure that rebuilds its graph from ``param``
    each call (the usual model-forward pattern). Returns the max relative
    error over the checked coordinates.
    """
    if coords is None:
        if rng is None:
            rng = np.random.default_rng(0)
        flat_idx = rng.choice(param.data.size, size=min(n_coords, param.data.size), replace=False)
        coords = [np.unravel_index(i, param.data.shape) for i in flat_idx]

    param.grad = None
    out = f()
    out.backward()
    analytic = param.grad if param.grad is not None else np.zeros_like(param.data)

    worst = 0.0
    for c in coords:
        orig = param.data[c]
        param.data[c] = orig + h
        with no_grad():
            f_plus = f().item()
        param.data[c] = orig - h
        with no_grad():
            f_minus = f().item()
        param.data[c] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = abs(analytic[c] - numeric) / (abs(numeric) + 1e-8)
        worst = max(worst, err)
    param.grad = None
    return worst
