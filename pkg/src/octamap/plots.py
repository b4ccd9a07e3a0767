"""Matplotlib rendering of iteration traces and image comparisons.

Import order matters: the Agg backend is forced before pyplot loads so the
CLI works without a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .recon import IterationTrace
from .volume import EnFaceImage


def trace_figure(trace: IterationTrace, path: str | Path) -> None:
    """Render the per-iteration curves of a reconstruction run to a file."""
    n_rows = 3 if trace.has_reference else 1
    fig, axes = plt.subplots(n_rows, 1, figsize=(7, 2.6 * n_rows), sharex=True)
    axes = np.atleast_1d(axes)

    axes[0].plot(trace.iterations, trace.mse_vs_initial, lw=1.2)
    axes[0].set_ylabel("MSE vs initial")
    if trace.has_reference:
        axes[1].plot(trace.iterations, trace.psnr_db, lw=1.2, color="tab:green")
        axes[1].set_ylabel("PSNR [dB]")
        axes[2].plot(trace.iterations, trace.ssim, lw=1.2, color="tab:orange")
        axes[2].set_ylabel("SSIM")
    axes[-1].set_xlabel("iteration")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(str(path), dpi=130)
    plt.close(fig)


def compare_figure(
    a: EnFaceImage,
    b: EnFaceImage,
    path: str | Path,
    labels: tuple[str, str] = ("input", "reference"),
) -> None:
    """Render two en-face images side by side on a shared gray scale."""
    arrays = [np.asarray(img.data, dtype=np.float64).T for img in (a, b)]
    vmin = min(arr.min() for arr in arrays)
    vmax = max(arr.max() for arr in arrays)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4.2))
    for ax, arr, label in zip(axes, arrays, labels):
        im = ax.imshow(arr, cmap="gray", vmin=vmin, vmax=vmax, origin="lower")
        ax.set_title(label)
        ax.set_xlabel("B-scan")
        ax.set_ylabel("A-scan")
    fig.colorbar(im, ax=list(axes), shrink=0.85)
    fig.savefig(str(path), dpi=130)
    plt.close(fig)
