"""Closed-form estimators, gradients, and their volume-level lifts."""

import numpy as np
import pytest

from octamap import (
    AngioModel,
    AngioVolume,
    EPS_FLOOR,
    RepeatScanVolume,
    ad_closed_form,
    ad_decorrelation_term,
    ad_loglik_grad,
    closed_form,
    closed_form_volume,
    ifv_closed_form,
    ifv_loglik_grad,
    initial_octa,
    loglik,
    loglik_grad,
    loglik_grad_volume,
    sv_closed_form,
    sv_loglik_grad,
)

MODELS = [AngioModel.AD, AngioModel.IFV, AngioModel.SV]


def _single_voxel(y):
    """Lift a repeat series into a 1x1x1-voxel acquisition."""
    arr = np.asarray(y, dtype=np.float32).reshape(1, -1, 1, 1)
    return RepeatScanVolume(arr)


class TestClosedForms:
    @pytest.mark.parametrize(
        "pair, expected",
        [((1.0, 1.0), 0.0), ((3.0, 4.0), 0.04), ((0.0, 0.0), 0.0)],
    )
    def test_decorrelation_term(self, pair, expected):
        assert ad_decorrelation_term(*pair) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize(
        "y, expected",
        [([1, 1, 1, 1], 0.0), ([1, 0], 1.0), ([3, 4, 3], 0.04)],
    )
    def test_ad(self, y, expected):
        assert ad_closed_form(y) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize(
        "y, expected",
        [([1, 1, 1], 0.0), ([1, 3], 4.0), ([1, 3, 1], 4.0)],
    )
    def test_ifv(self, y, expected):
        assert ifv_closed_form(y) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize(
        "y, expected",
        [([5, 5, 5], 0.0), ([0, 2], 1.0), ([1, 2, 3], 2.0 / 3.0)],
    )
    def test_sv(self, y, expected):
        assert sv_closed_form(y) == pytest.approx(expected, abs=1e-15)

    def test_length_one_rejected(self):
        for fn in (ad_closed_form, ifv_closed_form, sv_closed_form):
            with pytest.raises(ValueError, match="at least two"):
                fn([1.0])

    def test_ad_bounded_by_two(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            y = rng.uniform(0.0, 5.0, rng.integers(2, 12))
            assert 0.0 <= ad_closed_form(y) <= 2.0

    def test_scaling_behavior(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            y = rng.uniform(0.1, 2.0, rng.integers(2, 9))
            c = float(rng.uniform(0.5, 8.0))
            assert ifv_closed_form(c * y) == pytest.approx(
                c * c * ifv_closed_form(y), rel=1e-12
            )
            assert ad_closed_form(c * y) == pytest.approx(
                ad_closed_form(y), rel=1e-12
            )


class TestGradients:
    @pytest.mark.parametrize(
        "fn, y, x, expected",
        [
            (ad_loglik_grad, [1, 0], 0.5, 1.0),
            (ad_loglik_grad, [1, 0], 2.0, -0.125),
            (ifv_loglik_grad, [1, 3], 2.0, 0.25),
            (ifv_loglik_grad, [1, 3], 8.0, -0.03125),
            (sv_loglik_grad, [0, 2], 0.5, 2.0),
            (sv_loglik_grad, [0, 2], 2.0, -0.25),
        ],
    )
    def test_scalar_values(self, fn, y, x, expected):
        assert fn(x, y) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("model", MODELS)
    def test_vanishes_at_closed_form(self, model):
        rng = np.random.default_rng(23)
        for _ in range(100):
            y = rng.uniform(0.05, 2.0, rng.integers(2, 11))
            x_star = closed_form(y, model)
            if x_star <= EPS_FLOOR:
                continue
            # the factored gradient evaluates the numerator as x_star - x,
            # so at the maximizer it is zero bitwise, not just approximately
            assert loglik_grad(x_star, y, model) == 0.0

    @pytest.mark.parametrize("model", MODELS)
    def test_sign_structure(self, model):
        rng = np.random.default_rng(24)
        for _ in range(100):
            y = rng.uniform(0.05, 2.0, rng.integers(2, 11))
            x_star = closed_form(y, model)
            if x_star <= 1e-6:
                continue
            assert loglik_grad(0.5 * x_star, y, model) > 0.0
            assert loglik_grad(1.5 * x_star, y, model) < 0.0

    @pytest.mark.parametrize("model", MODELS)
    def test_matches_finite_difference(self, model):
        rng = np.random.default_rng(25)
        for _ in range(60):
            y = rng.uniform(0.0, 1.0, rng.integers(2, 11))
            x = float(rng.uniform(1e-3, 2.0))
            # step balances truncation against cancellation in the difference;
            # the absolute floor absorbs roundoff when x sits near the maximizer
            h = 6e-6 * x
            num = (loglik(x + h, y, model) - loglik(x - h, y, model)) / (2 * h)
            an = loglik_grad(x, y, model)
            assert num == pytest.approx(an, rel=1e-5, abs=1e-5)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            ifv_loglik_grad(0.0, [1, 3])
        with pytest.raises(ValueError, match="positive"):
            loglik(-1.0, [1, 3], AngioModel.IFV)

    @pytest.mark.parametrize("model", MODELS)
    def test_loglik_peaks_at_closed_form(self, model):
        y = np.array([0.3, 0.9, 0.5, 0.7])
        x_star = closed_form(y, model)
        xs = np.logspace(-5, 0.5, 400)
        values = loglik(xs, y, model)
        assert loglik(x_star, y, model) >= values.max()


class TestVolumeLift:
    def test_single_voxel_closed_form(self):
        vol = initial_octa(_single_voxel([1, 3, 1]), AngioModel.IFV)
        assert vol.data.reshape(-1)[0] == pytest.approx(4.0)

    def test_constant_volume_clamps_to_floor(self):
        Y = RepeatScanVolume(np.full((2, 4, 3, 3), 0.7, dtype=np.float32))
        vol = initial_octa(Y, AngioModel.AD)
        assert np.all(vol.data == np.float32(EPS_FLOOR))

    @pytest.mark.parametrize("model", MODELS)
    def test_matches_scalar_closed_form(self, model):
        rng = np.random.default_rng(26)
        Y = RepeatScanVolume(rng.uniform(0, 1, (2, 6, 3, 4)).astype(np.float32))
        x_star, k = closed_form_volume(Y, model)
        expected_k = 6 if model is AngioModel.SV else 5
        assert k == expected_k
        for idx in [(0, 0, 0), (1, 2, 3), (0, 1, 2)]:
            series = Y.data[idx[0], :, idx[1], idx[2]].astype(np.float64)
            assert x_star[idx] == pytest.approx(closed_form(series, model), rel=1e-12)

    def test_permuting_bscans_permutes_output(self):
        rng = np.random.default_rng(27)
        Y = RepeatScanVolume(rng.uniform(0, 1, (4, 5, 3, 3)).astype(np.float32))
        perm = [2, 0, 3, 1]
        Yp = RepeatScanVolume(Y.data[perm])
        a = initial_octa(Y, AngioModel.IFV).data
        b = initial_octa(Yp, AngioModel.IFV).data
        assert np.array_equal(a[perm], b)

    def test_gradient_zero_at_initialization(self):
        rng = np.random.default_rng(28)
        Y = RepeatScanVolume(rng.uniform(0.1, 1, (2, 8, 4, 4)).astype(np.float32))
        for model in MODELS:
            x_star, _ = closed_form_volume(Y, model)
            g = loglik_grad_volume(np.maximum(x_star, EPS_FLOOR), Y, model)
            assert np.all(g == 0.0)

    def test_gradient_negative_above_initialization(self):
        rng = np.random.default_rng(29)
        Y = RepeatScanVolume(rng.uniform(0.1, 1, (2, 8, 4, 4)).astype(np.float32))
        x_star, _ = closed_form_volume(Y, AngioModel.IFV)
        g = loglik_grad_volume(2.0 * np.maximum(x_star, EPS_FLOOR), Y, AngioModel.IFV)
        assert np.all(g < 0.0)

    def test_single_voxel_gradient_lift(self):
        Y = _single_voxel([1, 3])
        g = loglik_grad_volume(np.full((1, 1, 1), 2.0), Y, AngioModel.IFV)
        assert g.reshape(-1)[0] == pytest.approx(0.25, rel=1e-14)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(30)
        Y = RepeatScanVolume(rng.uniform(0, 1, (2, 4, 3, 3)).astype(np.float32))
        with pytest.raises(ValueError, match="shape"):
            loglik_grad_volume(np.ones((2, 3, 4)), Y, AngioModel.IFV)

    def test_single_repeat_rejected(self):
        Y = RepeatScanVolume(np.ones((2, 1, 3, 3), dtype=np.float32))
        with pytest.raises(ValueError, match="at least two repeats"):
            closed_form_volume(Y, AngioModel.IFV)

    def test_nonpositive_estimate_rejected(self):
        rng = np.random.default_rng(31)
        Y = RepeatScanVolume(rng.uniform(0, 1, (1, 4, 2, 2)).astype(np.float32))
        X = AngioVolume(np.zeros((1, 2, 2), dtype=np.float32))
        with pytest.raises(ValueError, match="positive everywhere"):
            loglik_grad_volume(X, Y, AngioModel.IFV)
