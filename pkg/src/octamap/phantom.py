"""Synthetic vessel phantoms with known per-voxel variance, the matching
repeat-scan simulator, and a brute-force grid oracle for the closed-form
estimators.

The generator realizes the minimal amplitude model consistent with the
likelihoods: a static baseline plus i.i.d. Gaussian fluctuations of
variance x/2 per repeat, so consecutive repeat differences have variance
x before the non-negativity clamp.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import SlabSpec
from .models import AngioModel, loglik
from .volume import AngioVolume, RepeatScanVolume


@dataclass
class PhantomScene:
    """Ground truth variance field plus everything needed to resimulate it."""

    x_true: AngioVolume
    baseline: np.ndarray
    seed: int
    slab: SlabSpec
    params: dict = field(default_factory=dict)

    @property
    def dims_3d(self) -> tuple[int, int, int]:
        return self.x_true.dims_3d


def _stamp_ball(field3d: np.ndarray, center: np.ndarray, radius: int, value: float):
    nb, na, ns = field3d.shape
    lo = np.maximum(np.floor(center - radius).astype(int), 0)
    hi = np.minimum(np.ceil(center + radius).astype(int) + 1, [nb, na, ns])
    if (hi <= lo).any():
        return
    bb, aa, ss = np.ogrid[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    d2 = (bb - center[0]) ** 2 + (aa - center[1]) ** 2 + (ss - center[2]) ** 2
    field3d[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]][d2 <= radius * radius] = value


def make_vessel_scene(
    dims_3d: tuple[int, int, int],
    n_vessels: int,
    vessel_variance: float,
    background_variance: float,
    seed: int,
    radius_range: tuple[int, int] = (1, 3),
    baseline_inside: float = 0.5,
    baseline_outside: float = 0.05,
    n_waypoints: int = 4,
) -> PhantomScene:
    """Build a scene of piecewise-linear vessel tubes inside a flat slab.

    The variance field is ``background_variance`` everywhere except along
    ``n_vessels`` random tubes running across the B axis, where it is
    ``vessel_variance``.  Static amplitude is ``baseline_inside`` within the
    slab (middle half of the depth range) and ``baseline_outside`` elsewhere.
    Identical parameters and seed reproduce the scene exactly.
    """
    nb, na, ns = dims_3d
    if min(nb, na, ns) < 2:
        raise ValueError(f"dims {dims_3d} too small for a scene")
    if not vessel_variance > background_variance >= 0:
        raise ValueError(
            "need vessel_variance > background_variance >= 0, got "
            f"{vessel_variance} and {background_variance}"
        )
    if n_vessels < 0:
        raise ValueError("n_vessels must be non-negative")

    slab = SlabSpec(ns // 4, ns - ns // 4)
    rng = np.random.default_rng(seed)
    x_true = np.full(dims_3d, background_variance, dtype=np.float64)

    for _ in range(n_vessels):
        radius = int(rng.integers(radius_range[0], radius_range[1] + 1))
        b_knots = np.linspace(0, nb - 1, n_waypoints)
        a_lo, a_hi = radius, max(na - 1 - radius, radius)
        s_lo = min(slab.top_index + radius, slab.bottom_index - 1)
        s_hi = max(slab.bottom_index - 1 - radius, s_lo)
        a_knots = rng.uniform(a_lo, a_hi, n_waypoints)
        s_knots = rng.uniform(s_lo, s_hi, n_waypoints)
        knots = np.stack([b_knots, a_knots, s_knots], axis=1)
        for p, q in zip(knots[:-1], knots[1:]):
            # sample the segment densely enough that stamped balls overlap
            steps = max(int(np.ceil(np.linalg.norm(q - p) / 0.5)), 1)
            for t in np.linspace(0.0, 1.0, steps + 1):
                _stamp_ball(x_true, p + t * (q - p), radius, vessel_variance)

    baseline = np.full(dims_3d, baseline_outside, dtype=np.float64)
    baseline[:, :, slab.top_index : slab.bottom_index] = baseline_inside

    params = {
        "dims_3d": list(dims_3d),
        "n_vessels": n_vessels,
        "vessel_variance": vessel_variance,
        "background_variance": background_variance,
        "seed": seed,
        "radius_range": list(radius_range),
        "baseline_inside": baseline_inside,
        "baseline_outside": baseline_outside,
        "n_waypoints": n_waypoints,
    }
    return PhantomScene(AngioVolume(x_true), baseline, seed, slab, params)


def simulate_repeats(scene: PhantomScene, n_r: int, seed: int) -> RepeatScanVolume:
    """Draw a repeat-scan volume from the scene's amplitude model.

    Per voxel, each repeat is baseline + Gaussian(0, x_true/2) clamped at
    zero, so E[(y_i - y_{i+1})^2] = x_true before clamping.
    """
    if n_r < 2:
        raise ValueError("angiography needs at least two repeats")
    nb, na, ns = scene.dims_3d
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(np.asarray(scene.x_true.data, dtype=np.float64) / 2.0)
    noise = rng.standard_normal((nb, n_r, na, ns)) * sigma[:, None, :, :]
    y = np.clip(scene.baseline[:, None, :, :] + noise, 0.0, None)
    return RepeatScanVolume(y)


def default_mle_grid() -> np.ndarray:
    return np.logspace(np.log10(1e-6), np.log10(4.0), 10_000)


def brute_force_mle(y, model: AngioModel, grid: np.ndarray | None = None) -> float:
    """Grid argmax of the explicit log-likelihood; ties go to the smaller x.

    Independent of the closed forms on purpose: the two paths are checked
    against each other in tests.
    """
    if grid is None:
        grid = default_mle_grid()
    values = loglik(grid, y, model)
    return float(grid[int(np.argmax(values))])
