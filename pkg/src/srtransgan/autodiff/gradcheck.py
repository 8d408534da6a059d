"""Finite-difference verification of backward passes."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(f: Callable[[], Tensor], x: Tensor, eps: float = 1e-6) -> np.ndarray:
    """Central differences of the scalar ``f()`` with respect to every entry of ``x``."""
    grad = np.zeros_like(x.data, dtype=np.float64)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(f().data)
        flat[i] = orig - eps
        down = float(f().data)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def grad_check(f: Callable[[], Tensor], inputs: Tensor | Sequence[Tensor], eps: float = 1e-6) -> float:
    """Worst relative error between backward gradients and central differences.

    ``f`` is a closure over ``inputs`` returning a scalar tensor; it is re-run
    with perturbed data, so every input must be a leaf with ``requires_grad``.
    Relative error uses the denominator ``max(|a|, |b|, 1e-8)``.
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    for x in inputs:
        x.grad = None
    f().backward()
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        worst = max(worst, max_relative_error(analytic, numerical_grad(f, x, eps)))
    return worst
