"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tensor


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, eps: float = 1e-5) -> np.ndarray:
    """d fn() / d param by central differences, perturbing ``param.data`` in place."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = float(fn().data)
        flat[i] = orig - eps
        minus = float(fn().data)
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(
    fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5, floor: float = 1e-6
) -> float:
    """Max relative error between backprop and finite-difference gradients.

    ``fn`` must rebuild the graph on every call and return a scalar.
    """
    for p in params:
        p.grad = None
    out = fn()
    out.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        analytic = analytic.copy()
        numeric = numerical_grad(fn, p, eps)
        worst = max(worst, relative_error(analytic, numeric, floor))
    return worst
