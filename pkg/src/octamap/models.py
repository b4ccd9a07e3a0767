"""Per-voxel angiography likelihood models.

Each model treats a per-voxel statistic of the repeat amplitudes
y_1..y_N as Gaussian with variance x, the quantity being estimated:

* ``AD``  -- amplitude decorrelation: consecutive differences normalized by
  the pair energy, (y_i - y_j)^2 / (y_i^2 + y_j^2).
* ``IFV`` -- inter-frame variance: raw consecutive differences y_i - y_{i+1}
  with mean zero and variance x.
* ``SV``  -- sample variance of the repeats about their mean.

For every model the log-likelihood has the shape
``-(K/2) log(2 pi x) - S / (2 x)`` with K pairwise terms (K = N for SV) and
statistic sum S, so the maximizer is the closed form S / K and the gradient
is K (S/K - x) / (2 x^2).  The gradient is evaluated in that factored form
so it vanishes exactly at the closed form.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .volume import AngioVolume, RepeatScanVolume

# Positivity floor for variance estimates; the likelihood is undefined at
# x <= 0 and its gradient divides by x^2.
EPS_FLOOR = 1e-8


class AngioModel(str, Enum):
    AD = "ad"
    IFV = "ifv"
    SV = "sv"


def _as_repeats(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("a repeat series needs at least two amplitudes")
    if not np.isfinite(y).all():
        raise ValueError("amplitudes must be finite")
    if (y < 0).any():
        raise ValueError("amplitudes must be non-negative")
    return y


def ad_decorrelation_term(y_i: float, y_j: float) -> float:
    """Energy-normalized squared difference of one amplitude pair.

    Zero by convention when both amplitudes are zero (no signal carries no
    decorrelation evidence).
    """
    den = y_i * y_i + y_j * y_j
    if den == 0.0:
        return 0.0
    d = y_i - y_j
    return d * d / den


def _stat_sum(y: np.ndarray, model: AngioModel) -> tuple[float, int]:
    """Sum of the model's per-pair statistic and the term count."""
    if model is AngioModel.AD:
        d = np.diff(y)
        den = y[:-1] ** 2 + y[1:] ** 2
        terms = np.divide(d * d, den, out=np.zeros_like(den), where=den > 0)
        return float(terms.sum()), y.size - 1
    if model is AngioModel.IFV:
        d = np.diff(y)
        return float((d * d).sum()), y.size - 1
    if model is AngioModel.SV:
        r = y - y.mean()
        return float((r * r).sum()), y.size
    raise ValueError(f"unknown model {model!r}")


def ad_closed_form(y) -> float:
    """Mean energy-normalized squared consecutive difference; lies in [0, 2]."""
    s, k = _stat_sum(_as_repeats(y), AngioModel.AD)
    return s / k


def ifv_closed_form(y) -> float:
    """Mean squared consecutive difference."""
    s, k = _stat_sum(_as_repeats(y), AngioModel.IFV)
    return s / k


def sv_closed_form(y) -> float:
    """Population variance of the repeats."""
    s, k = _stat_sum(_as_repeats(y), AngioModel.SV)
    return s / k


def closed_form(y, model: AngioModel) -> float:
    s, k = _stat_sum(_as_repeats(y), model)
    return s / k


def _grad(x: float, x_star: float, k: int) -> float:
    if x <= 0:
        raise ValueError(f"variance must be positive, got {x}")
    return k * (x_star - x) / (2.0 * x * x)


def ad_loglik_grad(x: float, y) -> float:
    """Derivative in x of the decorrelation log-likelihood."""
    y = _as_repeats(y)
    s, k = _stat_sum(y, AngioModel.AD)
    return _grad(x, s / k, k)


def ifv_loglik_grad(x: float, y) -> float:
    """Derivative in x of the inter-frame-variance log-likelihood.

    Positive below the closed-form estimate and negative above it, so
    gradient ascent moves toward the maximizer.
    """
    y = _as_repeats(y)
    s, k = _stat_sum(y, AngioModel.IFV)
    return _grad(x, s / k, k)


def sv_loglik_grad(x: float, y) -> float:
    y = _as_repeats(y)
    s, k = _stat_sum(y, AngioModel.SV)
    return _grad(x, s / k, k)


def loglik_grad(x: float, y, model: AngioModel) -> float:
    y = _as_repeats(y)
    s, k = _stat_sum(y, model)
    return _grad(x, s / k, k)


def loglik(x, y, model: AngioModel):
    """Explicit log-likelihood of variance ``x`` for one repeat series.

    ``x`` may be a scalar or an array of candidate variances (all positive);
    the return value matches its shape.  This is the direct transcription of
    the Gaussian likelihood and is kept independent of the closed-form
    estimators so the two can be checked against each other.
    """
    y = _as_repeats(y)
    x = np.asarray(x, dtype=np.float64)
    if (x <= 0).any():
        raise ValueError("variance must be positive")
    s, k = _stat_sum(y, model)
    out = -0.5 * k * np.log(2.0 * np.pi * x) - s / (2.0 * x)
    return float(out) if out.ndim == 0 else out


def _volume_stat(data: np.ndarray, model: AngioModel) -> tuple[np.ndarray, int]:
    """Per-voxel statistic sum over the repeat axis of a 4D block."""
    d64 = np.asarray(data, dtype=np.float64)
    n_r = d64.shape[1]
    if model is AngioModel.AD:
        lo, hi = d64[:, :-1], d64[:, 1:]
        num = (hi - lo) ** 2
        den = lo * lo + hi * hi
        terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        return terms.sum(axis=1), n_r - 1
    if model is AngioModel.IFV:
        d = np.diff(d64, axis=1)
        return (d * d).sum(axis=1), n_r - 1
    if model is AngioModel.SV:
        r = d64 - d64.mean(axis=1, keepdims=True)
        return (r * r).sum(axis=1), n_r
    raise ValueError(f"unknown model {model!r}")


def closed_form_volume(Y: RepeatScanVolume, model: AngioModel) -> tuple[np.ndarray, int]:
    """Per-voxel closed-form variance estimates (unclamped) and term count.

    Returns a float64 array of shape (n_b, n_a, n_s).
    """
    if Y.dims.n_r < 2:
        raise ValueError("angiography needs at least two repeats")
    s, k = _volume_stat(Y.data, model)
    return s / k, k


def initial_octa(
    Y: RepeatScanVolume, model: AngioModel, floor: float = EPS_FLOOR
) -> AngioVolume:
    """Closed-form per-voxel estimate, clamped up to the positivity floor."""
    x_star, _ = closed_form_volume(Y, model)
    return AngioVolume(np.maximum(x_star, floor))


def loglik_grad_volume(
    X: AngioVolume | np.ndarray, Y: RepeatScanVolume, model: AngioModel
) -> np.ndarray:
    """Per-voxel log-likelihood gradient field at the current estimate ``X``.

    Returns float64; the caller owns step size and clamping.
    """
    x = np.asarray(getattr(X, "data", X), dtype=np.float64)
    x_star, k = closed_form_volume(Y, model)
    if x.shape != x_star.shape:
        raise ValueError(f"estimate shape {x.shape} != volume shape {x_star.shape}")
    if (x <= 0).any():
        raise ValueError("estimates must be positive everywhere")
    return k * (x_star - x) / (2.0 * x * x)
