"""Report figures: training curves, evaluation bars, saliency panels.

Rendered off-screen with the Agg backend. PNG metadata is stripped so a
fixed input gives byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 8,
    "axes.labelsize": 8,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "image.interpolation": "nearest",
    "svg.hashsalt": "srtransgan",
}

CM = 1 / 2.54


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None}, bbox_inches=None)
    plt.close(fig)
    return path


def plot_training_curves(records, path) -> Path:
    """Loss curves from a list of ``TrainLogRecord``."""
    steps = [r.step for r in records]
    with plt.rc_context(STYLE):
        fig, (ax_rec, ax_adv) = plt.subplots(1, 2, figsize=(16 * CM, 6 * CM), layout="constrained")
        ax_rec.plot(steps, [r.g_rec_loss for r in records], lw=1.0, color="C0")
        ax_rec.set(xlabel="step", ylabel="L1 reconstruction", yscale="log" if records else "linear")
        ax_adv.plot(steps, [r.d_loss for r in records], lw=1.0, label="discriminator")
        ax_adv.plot(steps, [r.g_adv_loss for r in records], lw=1.0, label="generator adv.")
        ax_adv.set(xlabel="step", ylabel="adversarial loss")
        ax_adv.legend(frameon=False)
        return _save(fig, path)


def plot_eval_report(report, path) -> Path:
    """Paired bars of model vs bicubic PSNR and SSIM per image."""
    names = [r.image for r in report.rows]
    x = np.arange(len(names))
    w = 0.38
    # identical images give infinite PSNR; draw those at the finite maximum
    finite = [v for r in report.rows for v in (r.psnr, r.bicubic_psnr) if math.isfinite(v)]
    cap = max(finite) if finite else 100.0
    capped = lambda v: v if math.isfinite(v) else cap  # noqa: E731
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(16 * CM, 6 * CM), layout="constrained")
        for ax, key, label in ((axes[0], "psnr", "PSNR (dB)"), (axes[1], "ssim", "SSIM")):
            ax.bar(x - w / 2, [capped(getattr(r, key)) for r in report.rows], w, label="model")
            ax.bar(x + w / 2, [capped(getattr(r, "bicubic_" + key)) for r in report.rows], w, label="bicubic")
            ax.set_xticks(x, names, rotation=45, ha="right")
            ax.set_ylabel(label)
        axes[0].legend(frameon=False)
        fig.suptitle(f"channel mode: {report.mode}")
        return _save(fig, path)


def plot_saliency_panel(lr: np.ndarray, sal, path) -> Path:
    """LR input, normalised map and the rendered colour view side by side."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(18 * CM, 6.5 * CM), layout="constrained")
        axes[0].imshow(np.clip(np.transpose(lr, (1, 2, 0)), 0, 1))
        axes[0].set_title("LR input")
        im = axes[1].imshow(sal.values[..., 0], cmap="gray", vmin=0, vmax=1)
        axes[1].set_title("normalised |dL/dLR|")
        fig.colorbar(im, ax=axes[1], shrink=0.8)
        axes[2].imshow(sal.colored)
        axes[2].set_title("colour view")
        for ax in axes:
            ax.set_axis_off()
        return _save(fig, path)
