"""Volume regularizers: orthonormal Haar shrinkage and dual-projection TV.

Both operate on plain float64 arrays; the reconstruction loop owns the
positivity clamp ordering, so each function takes an optional ``floor``
that may be disabled by passing ``None``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import EPS_FLOOR

_SQRT2 = np.sqrt(2.0)

# Dual step for the 3D projection iteration; 1/(4*ndim) keeps the fixed
# point iteration non-expansive.
TV_DUAL_STEP = 1.0 / 12.0


@dataclass(frozen=True)
class WaveletShrinkage:
    """Haar-domain detail thresholding.

    ``soft`` switches from coefficient zeroing to magnitude shrinkage; the
    default is hard thresholding.
    """

    threshold: float = 5e-4
    levels: int = 3
    soft: bool = False

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.levels < 1:
            raise ValueError("levels must be at least 1")


@dataclass(frozen=True)
class TotalVariation:
    """Rudin-Osher-Fatemi denoising via the dual projection iteration."""

    weight: float = 1e-4
    inner_iterations: int = 10

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("weight must be positive")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be at least 1")


RegularizerSpec = WaveletShrinkage | TotalVariation | None


@dataclass
class HaarPyramid:
    """Multi-level separable 3D Haar decomposition.

    ``details[i]`` holds the seven detail bands of level ``i`` (level 0 is
    the finest) keyed by an l/h string per axis; ``shapes[i]`` records the
    array shape entering that level so odd-extent padding can be undone on
    inversion.
    """

    approx: np.ndarray
    details: list[dict[str, np.ndarray]] = field(default_factory=list)
    shapes: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.details)


def _fwd_axis(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    if x.shape[axis] % 2:
        # symmetric half-sample extension: repeat the boundary sample
        edge = [slice(None)] * x.ndim
        edge[axis] = slice(-1, None)
        x = np.concatenate([x, x[tuple(edge)]], axis=axis)
    ev = [slice(None)] * x.ndim
    od = [slice(None)] * x.ndim
    ev[axis] = slice(0, None, 2)
    od[axis] = slice(1, None, 2)
    even, odd = x[tuple(ev)], x[tuple(od)]
    return (even + odd) / _SQRT2, (even - odd) / _SQRT2


def _inv_axis(a: np.ndarray, d: np.ndarray, axis: int, n: int) -> np.ndarray:
    even = (a + d) / _SQRT2
    odd = (a - d) / _SQRT2
    shape = list(a.shape)
    shape[axis] = 2 * a.shape[axis]
    out = np.empty(shape, dtype=np.float64)
    ev = [slice(None)] * out.ndim
    od = [slice(None)] * out.ndim
    ev[axis] = slice(0, None, 2)
    od[axis] = slice(1, None, 2)
    out[tuple(ev)] = even
    out[tuple(od)] = odd
    trim = [slice(None)] * out.ndim
    trim[axis] = slice(0, n)
    return out[tuple(trim)]


def _fwd_level(x: np.ndarray) -> dict[str, np.ndarray]:
    bands: dict[str, np.ndarray] = {}
    a0, d0 = _fwd_axis(x, 0)
    for k0, arr0 in (("l", a0), ("h", d0)):
        a1, d1 = _fwd_axis(arr0, 1)
        for k1, arr1 in ((k0 + "l", a1), (k0 + "h", d1)):
            a2, d2 = _fwd_axis(arr1, 2)
            bands[k1 + "l"] = a2
            bands[k1 + "h"] = d2
    return bands


def _inv_level(bands: dict[str, np.ndarray], shape: tuple[int, int, int]) -> np.ndarray:
    padded = tuple(n + (n % 2) for n in shape)
    merged2 = {
        key: _inv_axis(bands[key + "l"], bands[key + "h"], 2, padded[2])
        for key in ("ll", "lh", "hl", "hh")
    }
    merged1 = {
        key: _inv_axis(merged2[key + "l"], merged2[key + "h"], 1, padded[1])
        for key in ("l", "h")
    }
    full = _inv_axis(merged1["l"], merged1["h"], 0, padded[0])
    return full[: shape[0], : shape[1], : shape[2]]


def haar_dwt_3d(x: np.ndarray, levels: int = 3) -> HaarPyramid:
    """Orthonormal separable 3D Haar analysis, recursing on the approximation.

    Odd extents are extended by one edge sample before pairing; the original
    shape at each level is recorded so that :func:`haar_idwt_3d` inverts
    exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected a 3D array, got shape {x.shape}")
    if levels < 1:
        raise ValueError("levels must be at least 1")
    pyr = HaarPyramid(approx=x)
    current = x
    for level in range(levels):
        if min(current.shape) < 2:
            raise ValueError(
                f"level {level + 1} needs every extent >= 2, got {current.shape}"
            )
        bands = _fwd_level(current)
        pyr.shapes.append(current.shape)
        approx = bands.pop("lll")
        pyr.details.append(bands)
        current = approx
    pyr.approx = current
    return pyr


def haar_idwt_3d(pyr: HaarPyramid) -> np.ndarray:
    """Exact inverse of :func:`haar_dwt_3d`."""
    current = pyr.approx
    for bands, shape in zip(reversed(pyr.details), reversed(pyr.shapes)):
        merged = dict(bands)
        merged["lll"] = current
        current = _inv_level(merged, shape)
    return current


def wavelet_shrinkage(
    x: np.ndarray,
    threshold: float,
    levels: int = 3,
    soft: bool = False,
    floor: float | None = EPS_FLOOR,
) -> np.ndarray:
    """Threshold Haar detail coefficients, leaving the approximation band intact.

    Hard thresholding zeroes detail coefficients with magnitude strictly
    below ``threshold``; the soft variant shrinks magnitudes by it.
    """
    pyr = haar_dwt_3d(x, levels=levels)
    for bands in pyr.details:
        for key, c in bands.items():
            if soft:
                bands[key] = np.sign(c) * np.maximum(np.abs(c) - threshold, 0.0)
            else:
                c = c.copy()
                c[np.abs(c) < threshold] = 0.0
                bands[key] = c
    out = haar_idwt_3d(pyr)
    if floor is not None:
        out = np.maximum(out, floor)
    return out


def _grad3(u: np.ndarray) -> np.ndarray:
    """Forward differences with a zero last row per axis (Neumann boundary)."""
    g = np.zeros((3,) + u.shape, dtype=np.float64)
    g[0, :-1] = u[1:] - u[:-1]
    g[1, :, :-1] = u[:, 1:] - u[:, :-1]
    g[2, :, :, :-1] = u[:, :, 1:] - u[:, :, :-1]
    return g


def _div3(p: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`_grad3`; sums to zero over the volume."""
    d = np.zeros(p.shape[1:], dtype=np.float64)
    d[:-1] += p[0, :-1]
    d[1:] -= p[0, :-1]
    d[:, :-1] += p[1, :, :-1]
    d[:, 1:] -= p[1, :, :-1]
    d[:, :, :-1] += p[2, :, :, :-1]
    d[:, :, 1:] -= p[2, :, :, :-1]
    return d


def tv_denoise(
    x: np.ndarray,
    weight: float,
    inner_iterations: int = 10,
    floor: float | None = EPS_FLOOR,
) -> np.ndarray:
    """ROF denoising by a fixed number of dual projection updates.

    Runs exactly ``inner_iterations`` updates of the dual field with step
    ``TV_DUAL_STEP`` and returns ``x - weight * div(p)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected a 3D array, got shape {x.shape}")
    if weight <= 0:
        raise ValueError("weight must be positive")
    p = np.zeros((3,) + x.shape, dtype=np.float64)
    f_over_w = x / weight
    tau = TV_DUAL_STEP
    for _ in range(inner_iterations):
        g = _grad3(_div3(p) - f_over_w)
        norm = np.sqrt((g * g).sum(axis=0))
        p = (p + tau * g) / (1.0 + tau * norm)
    out = x - weight * _div3(p)
    if floor is not None:
        out = np.maximum(out, floor)
    return out


def total_variation(x: np.ndarray) -> float:
    """Isotropic discrete total variation (forward differences, Neumann)."""
    g = _grad3(np.asarray(x, dtype=np.float64))
    return float(np.sqrt((g * g).sum(axis=0)).sum())


def apply_regularizer(x: np.ndarray, spec: RegularizerSpec) -> np.ndarray:
    """Dispatch on a regularizer spec; ``None`` is the identity.

    Clamping is left to the caller.
    """
    if spec is None:
        return x
    if isinstance(spec, WaveletShrinkage):
        return wavelet_shrinkage(
            x, spec.threshold, levels=spec.levels, soft=spec.soft, floor=None
        )
    if isinstance(spec, TotalVariation):
        return tv_denoise(
            x, spec.weight, inner_iterations=spec.inner_iterations, floor=None
        )
    raise TypeError(f"unknown regularizer spec {spec!r}")
