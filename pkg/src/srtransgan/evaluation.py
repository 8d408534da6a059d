"""Dataset evaluation against the bicubic baseline."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import PreconditionError
from .generator import Generator, super_resolve
from .io.dataset import ImagePair
from .io.resample import bicubic_resize
from .metrics import MetricReport, MetricRow, image_metrics

Upscaler = Callable[[ImagePair], np.ndarray]


def bicubic_baseline(pair: ImagePair) -> np.ndarray:
    _, h, w = pair.hr.shape
    return bicubic_resize(pair.lr, h, w).data


def model_upscaler(gen: Generator, scale: int) -> Upscaler:
    return lambda pair: super_resolve(gen, pair.lr, scale)


def evaluate(pairs: list[ImagePair], upscaler: Upscaler, mode: str = "rgb") -> MetricReport:
    """Score ``upscaler`` and bicubic on every pair; both outputs are clamped to [0, 1]."""
    if not pairs:
        raise PreconditionError("dataset is empty: nothing to evaluate")
    report = MetricReport(mode)
    for pair in pairs:
        sr = np.clip(np.asarray(upscaler(pair), dtype=np.float64), 0.0, 1.0)
        bic = np.clip(bicubic_baseline(pair).astype(np.float64), 0.0, 1.0)
        p, s = image_metrics(sr, pair.hr, mode)
        bp, bs = image_metrics(bic, pair.hr, mode)
        report.rows.append(MetricRow(pair.name, p, s, bp, bs))
    return report
