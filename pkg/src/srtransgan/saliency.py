"""Input-gradient activation maps for the generator.

The map is the magnitude of d(L1 reconstruction loss)/d(LR input), reduced
over colour channels by a per-pixel maximum and min-max normalised to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.tensor import Tensor
from .errors import DimensionError, PreconditionError
from .generator import Generator
from .training.losses import reconstruction_loss


@dataclass
class SaliencyMap:
    values: np.ndarray  # (H, W, 1) in [0, 1]
    raw: np.ndarray  # (H, W) un-normalised gradient magnitude
    colored: np.ndarray  # (H, W, 3) uint8

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


def normalize_map(raw: np.ndarray) -> np.ndarray:
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        return np.zeros_like(raw, dtype=np.float64)
    return (raw - lo) / (hi - lo)


def input_gradient(gen: Generator, lr: np.ndarray, hr: np.ndarray) -> np.ndarray:
    """``d L1(HR, G(LR)) / d LR`` for a single ``(3, H, W)`` image.

    LR extents that are not a multiple of the generator's requirement are
    edge-padded; the loss only covers the unpadded output region, and the
    gradient reaching each padded copy is folded back onto its edge pixel.
    """
    lr, hr = np.asarray(lr), np.asarray(hr)
    if lr.ndim != 3 or hr.ndim != 3 or lr.shape[0] != 3 or hr.shape[0] != 3:
        raise DimensionError(f"expected (3, H, W) images, got {lr.shape} and {hr.shape}")
    _, h, w = lr.shape
    if hr.shape[1:] != (2 * h, 2 * w):
        raise DimensionError(f"HR {hr.shape[1:]} is not 2x LR {lr.shape[1:]}")
    m = gen.config.multiple
    ph, pw = (-h) % m, (-w) % m
    padded = np.pad(lr, ((0, 0), (0, ph), (0, pw)), mode="edge") if ph or pw else lr
    dtype = gen.embed.weight.dtype
    x = Tensor(padded[None].astype(dtype), requires_grad=True)

    was_training = gen.training
    flags = [p.requires_grad for p in gen.parameters()]
    gen.eval()
    gen.requires_grad_(False)
    try:
        sr = gen.forward(x, clamp=False)
        if ph or pw:
            sr = ops.narrow(ops.narrow(sr, 2, 0, 2 * h), 3, 0, 2 * w)
        reconstruction_loss(Tensor(hr[None].astype(dtype)), sr).backward()
    finally:
        for p, f in zip(gen.parameters(), flags):
            p.requires_grad = f
        gen.train(was_training)
    g = x.grad[0].copy()
    g[:, h - 1, :] += g[:, h:, :].sum(axis=1)
    g[:, :h, w - 1] += g[:, :h, w:].sum(axis=2)
    return g[:, :h, :w]


def saliency_map(gen: Generator, lr: np.ndarray, hr: np.ndarray) -> SaliencyMap:
    grad = input_gradient(gen, lr, hr)
    raw = np.abs(grad.astype(np.float64)).max(axis=0)
    values = normalize_map(raw)[..., None]
    return SaliencyMap(values, raw, render_colormap(values))


def colormap_rgb(v: np.ndarray) -> np.ndarray:
    """Blue -> green -> red, piecewise linear in v.

    ``v = 0`` is (0, 0, 1), ``v = 0.5`` is (0, 1, 0), ``v = 1`` is (1, 0, 0).
    """
    v = np.asarray(v, dtype=np.float64)
    r = np.clip(2.0 * v - 1.0, 0.0, 1.0)
    b = np.clip(1.0 - 2.0 * v, 0.0, 1.0)
    g = 1.0 - r - b
    return np.stack([r, g, b], axis=-1)


def render_colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] (shape ``(H, W)`` or ``(H, W, 1)``) to an 8-bit ``(H, W, 3)`` image."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3 and values.shape[-1] == 1:
        values = values[..., 0]
    if values.size and (values.min() < 0.0 or values.max() > 1.0 or np.isnan(values).any()):
        raise PreconditionError("colormap input must lie in [0, 1]")
    return np.floor(colormap_rgb(values) * 255.0 + 0.5).astype(np.uint8)
