"""Separable bicubic resampling.

The kernel is Catmull-Rom (Keys cubic with ``a = -0.5``). Output pixel ``i``
samples the source at ``(i + 0.5) / scale - 0.5`` (half-pixel centres) and
taps outside the image are clamped to the nearest edge pixel. When shrinking,
the kernel is stretched by ``1 / scale`` and renormalised so that it also acts
as an anti-aliasing filter, as MATLAB's ``imresize`` does.

Resizing is expressed as two fixed matrices applied along height and width,
which makes it differentiable through
:func:`srtransgan.autodiff.ops.separable_resample`.
"""

from __future__ import annotations

import functools
import math

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import Tensor, as_tensor
from ..errors import PreconditionError

A = -0.5


def cubic_kernel(t):
    """Keys cubic convolution kernel with ``a = -0.5``."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (A + 2) * t3 - (A + 3) * t2 + 1
    far = A * t3 - 5 * A * t2 + 8 * A * t - 4 * A
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


@functools.lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int, antialias: bool = True) -> np.ndarray:
    """``(n_out, n_in)`` float64 matrix mapping a 1-D signal to its resized version."""
    if n_in < 1 or n_out < 1:
        raise PreconditionError(f"resize extents must be >= 1, got {n_in} -> {n_out}")
    scale = n_out / n_in
    shrink = antialias and scale < 1.0
    support = 2.0 / scale if shrink else 2.0
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        x = (i + 0.5) / scale - 0.5
        first = math.floor(x - support) + 1
        taps = np.arange(first, first + int(math.ceil(2 * support)) + 1)
        if shrink:
            w = cubic_kernel((x - taps) * scale) * scale
            w = w / w.sum()
        else:
            w = cubic_kernel(x - taps)
        idx = np.clip(taps, 0, n_in - 1)
        np.add.at(mat[i], idx, w)
    mat.setflags(write=False)
    return mat


def bicubic_resize(img, out_h: int, out_w: int, antialias: bool = True) -> Tensor:
    """Resize the last two axes of ``img`` (``(C, H, W)`` or ``(N, C, H, W)``) to ``out_h x out_w``."""
    img = as_tensor(img)
    if out_h < 1 or out_w < 1:
        raise PreconditionError(f"output extents must be >= 1, got {out_h}x{out_w}")
    h, w = img.shape[-2:]
    rows = resize_matrix(h, out_h, antialias)
    cols = resize_matrix(w, out_w, antialias)
    return ops.separable_resample(img, rows, cols)


def upscale(img, factor: int) -> Tensor:
    h, w = as_tensor(img).shape[-2:]
    return bicubic_resize(img, h * factor, w * factor)


def downscale(img, factor: int) -> Tensor:
    h, w = as_tensor(img).shape[-2:]
    if h % factor or w % factor:
        raise PreconditionError(f"extents {h}x{w} not divisible by {factor}")
    return bicubic_resize(img, h // factor, w // factor)
