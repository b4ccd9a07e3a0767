"""Evaluation pipeline: en-face projection, thresholding, PSNR/SSIM,
median-filter baseline, and grayscale PNG export.

PSNR and SSIM accept either the typed containers or plain arrays; all
metric arithmetic runs in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .volume import AngioVolume, EnFaceImage

SSIM_K1 = 0.01
SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5  # 11x11 window


@dataclass(frozen=True)
class SlabSpec:
    """Half-open depth range [top_index, bottom_index) projected per column."""

    top_index: int
    bottom_index: int

    def __post_init__(self):
        if self.top_index < 0 or self.bottom_index <= self.top_index:
            raise ValueError(
                f"slab [{self.top_index}, {self.bottom_index}) is empty or negative"
            )


def _as_array(x, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(getattr(x, "data", x), dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}D input, got shape {arr.shape}")
    return arr


def enface_percentile(x, slab: SlabSpec, percentile: float = 98.0) -> EnFaceImage:
    """Project a volume to an en-face image, one percentile per (B, A) column.

    The slab selects the depth samples entering the order statistic;
    percentiles interpolate linearly between order statistics.
    """
    arr = _as_array(x, 3)
    if slab.bottom_index > arr.shape[2]:
        raise ValueError(
            f"slab [{slab.top_index}, {slab.bottom_index}) exceeds depth {arr.shape[2]}"
        )
    if not 0 <= percentile <= 100:
        raise ValueError(f"percentile must be in [0, 100], got {percentile}")
    cols = arr[:, :, slab.top_index : slab.bottom_index]
    return EnFaceImage(np.percentile(cols, percentile, axis=2))


def background_threshold(img: EnFaceImage, rel_threshold: float) -> EnFaceImage:
    """Zero pixels below rel_threshold times the image's 99.9th percentile."""
    if not 0 <= rel_threshold <= 1:
        raise ValueError(f"rel_threshold must be in [0, 1], got {rel_threshold}")
    data = _as_array(img, 2)
    cut = rel_threshold * np.percentile(data, 99.9)
    out = data.copy()
    out[out < cut] = 0.0
    return EnFaceImage(out)


def median_filter_3d(x):
    """3x3x3 median filter with edge replication at the boundaries.

    Container in, container out; plain arrays pass through as arrays.
    """
    arr = np.asarray(getattr(x, "data", x))
    if arr.ndim != 3:
        raise ValueError(f"expected a 3D input, got shape {arr.shape}")
    out = ndimage.median_filter(arr, size=3, mode="nearest")
    return AngioVolume(out) if isinstance(x, AngioVolume) else out


def psnr(a, b, data_range: float) -> float:
    """Peak signal-to-noise ratio in dB; math.inf when the inputs are equal."""
    x = _as_array(a)
    y = _as_array(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if data_range <= 0:
        raise ValueError(f"data_range must be positive, got {data_range}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(data_range * data_range / mse))


def reference_data_range(ref, percentile: float = 99.9) -> float:
    """Data range convention for volume/image comparisons: a high percentile
    of the reference, robust against isolated hot voxels."""
    return float(np.percentile(_as_array(ref), percentile))


def _ssim_kernel() -> np.ndarray:
    t = np.arange(-_SSIM_RADIUS, _SSIM_RADIUS + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * _SSIM_SIGMA * _SSIM_SIGMA))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, data_range: float) -> float:
    """Mean structural similarity with an 11x11 Gaussian window, sigma 1.5.

    Local weighted means/variances/covariance feed the standard two-factor
    similarity map; the window-radius border is cropped before averaging so
    no padding policy enters the result.  Requires both extents >= 11.
    """
    x = _as_array(a, 2)
    y = _as_array(b, 2)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape) < 2 * _SSIM_RADIUS + 1:
        raise ValueError(f"image extents must be >= {2 * _SSIM_RADIUS + 1}, got {x.shape}")
    if data_range <= 0:
        raise ValueError(f"data_range must be positive, got {data_range}")

    win = _ssim_kernel()
    r = _SSIM_RADIUS
    crop = (slice(r, -r), slice(r, -r))

    def wmean(arr):
        return ndimage.correlate(arr, win, mode="constant")[crop]

    ux = wmean(x)
    uy = wmean(y)
    vx = wmean(x * x) - ux * ux
    vy = wmean(y * y) - uy * uy
    vxy = wmean(x * y) - ux * uy

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2.0 * ux * uy + c1) * (2.0 * vxy + c2)
    den = (ux * ux + uy * uy + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def export_png(img: EnFaceImage, path: str | Path, bit_depth: int = 8) -> None:
    """Write a min-max normalized grayscale PNG plus a bounds sidecar.

    A constant image maps to mid-gray.  The sidecar ``<path>.bounds.txt``
    records min, max, and bit depth so pixel values can be mapped back to
    the original scale within one quantization step.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    data = _as_array(img, 2)
    lo = float(data.min())
    hi = float(data.max())
    levels = (1 << bit_depth) - 1
    if hi > lo:
        q = np.round((data - lo) / (hi - lo) * levels)
    else:
        q = np.full_like(data, (1 << bit_depth) // 2)
    # transpose so image width runs along the B axis
    q = q.T
    if bit_depth == 8:
        pil = Image.fromarray(q.astype(np.uint8), mode="L")
    else:
        pil = Image.fromarray(q.astype(np.uint16))
    pil.save(str(path), format="PNG")
    sidecar = Path(f"{path}.bounds.txt")
    sidecar.write_text(f"min={lo!r}\nmax={hi!r}\nbit_depth={bit_depth}\n")


def load_png_image(path: str | Path) -> EnFaceImage:
    """Read a grayscale PNG back into an en-face image.

    When the export sidecar is present the pixels are mapped back to the
    recorded bounds; otherwise raw pixel values are returned.
    """
    with Image.open(str(path)) as pil:
        arr = np.asarray(pil, dtype=np.float64).T
    sidecar = Path(f"{path}.bounds.txt")
    if not sidecar.exists():
        return EnFaceImage(arr)
    fields = dict(
        line.split("=", 1) for line in sidecar.read_text().splitlines() if "=" in line
    )
    lo = float(fields["min"])
    hi = float(fields["max"])
    levels = (1 << int(fields["bit_depth"])) - 1
    if hi <= lo:
        return EnFaceImage(np.full_like(arr, lo))
    return EnFaceImage(lo + arr / levels * (hi - lo))
