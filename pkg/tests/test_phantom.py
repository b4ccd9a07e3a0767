"""Phantom scene generation, the repeat simulator, and the grid oracle."""

import numpy as np
import pytest

from octamap import (
    AngioModel,
    AngioVolume,
    PhantomScene,
    SlabSpec,
    brute_force_mle,
    default_mle_grid,
    ifv_closed_form,
    make_vessel_scene,
    simulate_repeats,
)


class TestScene:
    def test_background_only(self):
        scene = make_vessel_scene((8, 8, 8), 0, 0.1, 2e-3, seed=80)
        assert np.allclose(scene.x_true.data, 2e-3, rtol=1e-6)

    def test_deterministic_in_seed(self):
        a = make_vessel_scene((16, 16, 16), 2, 0.03, 5e-3, seed=81)
        b = make_vessel_scene((16, 16, 16), 2, 0.03, 5e-3, seed=81)
        assert np.array_equal(a.x_true.data, b.x_true.data)
        assert np.array_equal(a.baseline, b.baseline)

    def test_different_seeds_differ(self):
        a = make_vessel_scene((16, 16, 16), 2, 0.03, 5e-3, seed=82)
        b = make_vessel_scene((16, 16, 16), 2, 0.03, 5e-3, seed=83)
        assert not np.array_equal(a.x_true.data, b.x_true.data)

    def test_vessel_fraction_reasonable(self):
        scene = make_vessel_scene((32, 32, 32), 1, 0.03, 5e-3, seed=84)
        frac = float(np.mean(np.isclose(scene.x_true.data, 0.03, rtol=1e-5)))
        assert 0.0 < frac < 0.2

    def test_vessels_confined_to_slab_depths(self):
        scene = make_vessel_scene((32, 32, 32), 3, 0.03, 5e-3, seed=85)
        vessel = np.isclose(scene.x_true.data, 0.03, rtol=1e-5)
        depths = np.where(vessel.any(axis=(0, 1)))[0]
        assert depths.min() >= scene.slab.top_index
        assert depths.max() <= scene.slab.bottom_index - 1

    def test_baseline_levels(self):
        scene = make_vessel_scene((8, 8, 12), 0, 0.1, 1e-3, seed=86)
        inside = scene.baseline[:, :, scene.slab.top_index : scene.slab.bottom_index]
        outside = scene.baseline[:, :, : scene.slab.top_index]
        assert np.all(inside == 0.5)
        assert np.all(outside == 0.05)

    def test_variance_ordering_enforced(self):
        with pytest.raises(ValueError, match="vessel_variance"):
            make_vessel_scene((8, 8, 8), 1, 1e-3, 5e-3, seed=87)

    def test_degenerate_dims_rejected(self):
        with pytest.raises(ValueError, match="too small"):
            make_vessel_scene((1, 8, 8), 0, 0.1, 1e-3, seed=88)


class TestSimulateRepeats:
    def test_shapes_and_determinism(self):
        scene = make_vessel_scene((8, 8, 8), 1, 0.02, 1e-3, seed=89)
        a = simulate_repeats(scene, 5, seed=90)
        b = simulate_repeats(scene, 5, seed=90)
        assert a.dims.shape == (8, 5, 8, 8)
        assert np.array_equal(a.data, b.data)

    def test_zero_variance_gives_baseline(self):
        x_true = AngioVolume(np.zeros((4, 4, 4), dtype=np.float32))
        baseline = np.full((4, 4, 4), 0.5)
        scene = PhantomScene(x_true, baseline, seed=0, slab=SlabSpec(1, 3))
        reps = simulate_repeats(scene, 4, seed=91)
        assert np.allclose(reps.data, 0.5, atol=1e-7)

    def test_single_voxel_variance_recovery(self):
        x_true = AngioVolume(np.full((1, 1, 1), 0.04, dtype=np.float32))
        baseline = np.full((1, 1, 1), 0.5)
        scene = PhantomScene(x_true, baseline, seed=0, slab=SlabSpec(0, 1))
        n_r = 10_000
        reps = simulate_repeats(scene, n_r, seed=92)
        series = reps.data[0, :, 0, 0].astype(np.float64)
        estimate = ifv_closed_form(series)
        # chi-square spread of the mean of n_r-1 squared differences
        bound = 3.0 * 0.04 * np.sqrt(2.0 / (n_r - 1))
        assert abs(estimate - 0.04) < bound

    def test_mean_amplitude_matches_baseline(self):
        x_true = AngioVolume(np.full((1, 1, 1), 0.02, dtype=np.float32))
        baseline = np.full((1, 1, 1), 0.5)
        scene = PhantomScene(x_true, baseline, seed=0, slab=SlabSpec(0, 1))
        n_r = 10_000
        reps = simulate_repeats(scene, n_r, seed=93)
        series = reps.data[0, :, 0, 0].astype(np.float64)
        se = np.sqrt(0.01) / np.sqrt(n_r)
        assert abs(series.mean() - 0.5) < 3.0 * se

    def test_estimator_concentrates_on_truth(self):
        scene = make_vessel_scene((6, 6, 6), 1, 0.02, 2e-4, seed=94)
        reps = simulate_repeats(scene, 2000, seed=95)
        data = reps.data.astype(np.float64)
        d = np.diff(data, axis=1)
        estimates = (d * d).sum(axis=1) / (data.shape[1] - 1)
        truth = scene.x_true.data.astype(np.float64)
        rel_err = np.abs(estimates - truth) / truth
        assert np.mean(rel_err < 0.10) >= 0.99

    def test_too_few_repeats_rejected(self):
        scene = make_vessel_scene((4, 4, 4), 0, 0.1, 1e-3, seed=96)
        with pytest.raises(ValueError, match="at least two"):
            simulate_repeats(scene, 1, seed=97)


class TestGridOracle:
    def test_grid_shape_and_range(self):
        grid = default_mle_grid()
        assert grid.size == 10_000
        assert grid[0] == pytest.approx(1e-6, rel=1e-12)
        assert grid[-1] == pytest.approx(4.0, rel=1e-12)
        assert np.all(np.diff(grid) > 0)

    def test_ifv_pair(self):
        grid = default_mle_grid()
        bf = brute_force_mle([1.0, 3.0], AngioModel.IFV, grid)
        nearest = grid[np.argmin(np.abs(grid - 4.0))]
        assert bf == nearest

    def test_ad_triple(self):
        grid = default_mle_grid()
        bf = brute_force_mle([3.0, 4.0, 3.0], AngioModel.AD, grid)
        nearest = grid[np.argmin(np.abs(grid - 0.04))]
        assert bf == nearest

    def test_constant_series_pins_to_smallest_point(self):
        grid = default_mle_grid()
        # zero decorrelation makes the likelihood increase monotonically
        # toward x -> 0+, so the grid argmax sits at the lower end
        bf = brute_force_mle([1.0, 1.0], AngioModel.AD, grid)
        assert bf == grid[0]

    def test_below_grid_closed_form_pins_to_boundary(self):
        grid = default_mle_grid()
        y = [0.8096, 0.8099]
        assert ifv_closed_form(y) < grid[0]
        assert brute_force_mle(y, AngioModel.IFV, grid) == grid[0]

    def test_default_grid_used_when_omitted(self):
        assert brute_force_mle([1.0, 3.0], AngioModel.IFV) == brute_force_mle(
            [1.0, 3.0], AngioModel.IFV, default_mle_grid()
        )
