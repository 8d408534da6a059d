"""PSNR / SSIM image quality metrics and the tab-separated metric report."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, PreconditionError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def psnr(a, b, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical inputs."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"psnr: shapes {a.shape} and {b.shape} differ")
    if max_val <= 0:
        raise PreconditionError("psnr: max_val must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(rows, g.size, axis=1) @ g


def ssim(a, b, data_range: float = 1.0) -> float:
    """Single-channel SSIM, 11x11 Gaussian window (sigma 1.5), averaged over valid positions."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if a.ndim == 3 and a.shape[0] == 1:
        a, b = a[0], b[0]
    if a.ndim != 2:
        raise DimensionError(f"ssim expects a single-channel image, got shape {a.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise PreconditionError(f"ssim: image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    g = gaussian_window()
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def luma(img) -> np.ndarray:
    """ITU-R BT.601 luma of a ``(3, H, W)`` image, shape ``(1, H, W)``."""
    img = _as_array(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"luma expects (3, H, W), got {img.shape}")
    return np.tensordot(LUMA_WEIGHTS, img, axes=1)[None]


def image_metrics(sr, hr, mode: str = "rgb") -> tuple[float, float]:
    """``(psnr, ssim)`` of a ``(3, H, W)`` pair; ``mode`` is ``rgb`` (channel mean SSIM) or ``luma``."""
    sr, hr = _as_array(sr), _as_array(hr)
    if mode == "luma":
        ys, yh = luma(sr), luma(hr)
        return psnr(ys, yh), ssim(ys[0], yh[0])
    if mode != "rgb":
        raise PreconditionError(f"unknown channel mode {mode!r}")
    return psnr(sr, hr), float(np.mean([ssim(s, h) for s, h in zip(sr, hr)]))


REPORT_COLUMNS = ("image", "psnr", "ssim", "bicubic_psnr", "bicubic_ssim")


@dataclass
class MetricRow:
    image: str
    psnr: float
    ssim: float
    bicubic_psnr: float
    bicubic_ssim: float


@dataclass
class MetricReport:
    mode: str = "rgb"
    rows: list[MetricRow] = field(default_factory=list)

    def means(self) -> dict[str, float]:
        if not self.rows:
            return {c: math.nan for c in REPORT_COLUMNS[1:]}
        return {c: float(np.mean([getattr(r, c) for r in self.rows])) for c in REPORT_COLUMNS[1:]}

    def to_tsv(self) -> str:
        lines = ["\t".join(REPORT_COLUMNS)]
        for r in self.rows:
            lines.append("\t".join([r.image] + [_fmt(getattr(r, c)) for c in REPORT_COLUMNS[1:]]))
        means = self.means()
        lines.append("\t".join(["MEAN"] + [_fmt(means[c]) for c in REPORT_COLUMNS[1:]]))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8", newline="\n")

    @classmethod
    def from_tsv(cls, text: str, mode: str = "rgb") -> tuple["MetricReport", dict[str, float]]:
        lines = text.rstrip("\n").split("\n")
        if tuple(lines[0].split("\t")) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header: {lines[0]!r}")
        report, means = cls(mode), {}
        for line in lines[1:]:
            name, *vals = line.split("\t")
            nums = [float(v) for v in vals]
            if name == "MEAN":
                means = dict(zip(REPORT_COLUMNS[1:], nums))
            else:
                report.rows.append(MetricRow(name, *nums))
        return report, means


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else repr(float(v))
