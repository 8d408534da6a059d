"""LR/HR pair construction and dataset directory ingestion.

Two directory layouts are understood:

``paired``
    ``root/LR/<name>`` and ``root/HR/<name>`` with identical file names.
``hr-only``
    image files directly under ``root`` (or under ``root/HR``); the LR side is
    synthesised by bicubic downscaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..autodiff.rng import Rng
from ..errors import PreconditionError
from .images import load_image
from .resample import bicubic_resize

IMAGE_SUFFIXES = {".png", ".ppm", ".pgm"}


@dataclass
class ImagePair:
    lr: np.ndarray
    hr: np.ndarray
    scale: int
    name: str = ""

    def __post_init__(self):
        _, h, w = self.lr.shape
        if self.hr.shape[1:] != (h * self.scale, w * self.scale):
            raise PreconditionError(
                f"{self.name or 'pair'}: HR {self.hr.shape[1:]} is not {self.scale}x LR {self.lr.shape[1:]}"
            )


@dataclass
class ManifestEntry:
    name: str
    hr_path: Path
    lr_path: Path | None
    scale: int


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def load_pairs(self) -> list[ImagePair]:
        pairs = []
        for e in self.entries:
            hr = load_image(e.hr_path)
            if e.lr_path is None:
                pairs.append(make_pair(hr, e.scale, name=e.name))
            else:
                pairs.append(ImagePair(load_image(e.lr_path), hr, e.scale, e.name))
        return pairs


def make_pair(hr: np.ndarray, scale: int, name: str = "") -> ImagePair:
    """Synthesise the LR side of ``hr`` by bicubic downscaling."""
    if scale not in (2, 4):
        raise PreconditionError(f"scale must be 2 or 4, got {scale}")
    _, h, w = hr.shape
    if h % scale or w % scale:
        raise PreconditionError(f"{name or 'image'}: extents {h}x{w} not divisible by scale {scale}")
    lr = bicubic_resize(hr, h // scale, w // scale).data
    return ImagePair(lr.astype(np.float32), np.asarray(hr, dtype=np.float32), scale, name)


def crop_pair(pair: ImagePair, lr_crop: int, rng: Rng, multiple: int = 8) -> ImagePair:
    """Aligned random crop: ``lr_crop`` square in LR at (y, x), ``scale * lr_crop`` in HR at (s*y, s*x)."""
    if lr_crop % multiple:
        raise PreconditionError(f"lr_crop {lr_crop} must be divisible by {multiple}")
    _, h, w = pair.lr.shape
    if lr_crop > h or lr_crop > w:
        raise PreconditionError(f"crop {lr_crop} larger than LR image {h}x{w}")
    y = int(rng.integers(0, h - lr_crop + 1))
    x = int(rng.integers(0, w - lr_crop + 1))
    s = pair.scale
    return ImagePair(
        pair.lr[:, y:y + lr_crop, x:x + lr_crop].copy(),
        pair.hr[:, s * y:s * (y + lr_crop), s * x:s * (x + lr_crop)].copy(),
        s,
        f"{pair.name}@{y},{x}",
    )


def _images_in(directory: Path) -> dict[str, Path]:
    return {p.name: p for p in sorted(directory.iterdir()) if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES}


def _image_extent(path: Path) -> tuple[int, int]:
    return load_image(path).shape[1:]


def load_dataset(root, scale: int = 2, layout: str = "auto") -> DatasetManifest:
    """Build a manifest sorted by file name; ``layout`` is ``paired``, ``hr-only`` or ``auto``."""
    root = Path(root)
    if not root.is_dir():
        raise PreconditionError(f"dataset directory {root} does not exist")
    if layout == "auto":
        layout = "paired" if (root / "LR").is_dir() and (root / "HR").is_dir() else "hr-only"
    manifest = DatasetManifest()
    if layout == "hr-only":
        src = root / "HR" if (root / "HR").is_dir() else root
        for name, path in _images_in(src).items():
            h, w = _image_extent(path)
            if h % scale or w % scale:
                manifest.rejected.append((name, f"extents {h}x{w} not divisible by {scale}"))
                continue
            manifest.entries.append(ManifestEntry(name, path, None, scale))
        return manifest
    if layout != "paired":
        raise PreconditionError(f"unknown dataset layout {layout!r}")

    lr_files, hr_files = _images_in(root / "LR"), _images_in(root / "HR")
    missing = [f"LR/{n} has no HR counterpart" for n in sorted(set(lr_files) - set(hr_files))]
    missing += [f"HR/{n} has no LR counterpart" for n in sorted(set(hr_files) - set(lr_files))]
    if missing:
        raise PreconditionError(f"{root}: unmatched files:\n  " + "\n  ".join(missing))
    for name in sorted(hr_files):
        lh, lw = _image_extent(lr_files[name])
        hh, hw = _image_extent(hr_files[name])
        if (hh, hw) != (scale * lh, scale * lw):
            manifest.rejected.append((name, f"HR {hh}x{hw} is not {scale}x LR {lh}x{lw}"))
            continue
        manifest.entries.append(ManifestEntry(name, hr_files[name], lr_files[name], scale))
    return manifest
