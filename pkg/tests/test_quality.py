import numpy as np
import pytest

from evrecon.errors import ShapeError
from evrecon.quality import gaussian_window, histogram_normalize, mse, ssim


class TestHistogramNormalize:
    def test_output_range(self):
        rng = np.random.default_rng(71)
        out = histogram_normalize(rng.standard_normal((20, 20)) * 10 + 3)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_constant_image_maps_to_half(self):
        out = histogram_normalize(np.full((8, 8), 7.0))
        np.testing.assert_array_equal(out, np.full((8, 8), 0.5))

    def test_outliers_clamped(self):
        img = np.zeros(1000)
        img[:500] = np.linspace(0, 1, 500)
        img[0] = 1e6  # single hot pixel must not crush the scale
        out = histogram_normalize(img)
        assert np.median(out[:500]) > 0.1

    def test_affine_invariance(self):
        rng = np.random.default_rng(72)
        img = rng.random((16, 16))
        np.testing.assert_allclose(histogram_normalize(img),
                                   histogram_normalize(3.0 * img - 5.0),
                                   atol=1e-12)


class TestMSE:
    def test_identical_is_zero(self):
        img = np.random.default_rng(73).random((5, 5))
        assert mse(img, img) == 0.0

    def test_known_value(self):
        assert mse(np.zeros(4), np.full(4, 0.5)) == pytest.approx(0.25)

    def test_symmetry(self):
        rng = np.random.default_rng(74)
        a, b = rng.random(10), rng.random(10)
        assert mse(a, b) == mse(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse(np.zeros((2, 2)), np.zeros((3, 3)))


class TestGaussianWindow:
    def test_normalized(self):
        assert gaussian_window().sum() == pytest.approx(1.0, abs=1e-15)

    def test_symmetric_peak_center(self):
        w = gaussian_window(11, 1.5)
        np.testing.assert_allclose(w, w[::-1, ::-1], atol=1e-16)
        assert w[5, 5] == w.max()


class TestSSIM:
    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(75)
        img = rng.random((24, 24))
        assert ssim(img, img) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(76)
        a, b = rng.random((20, 20)), rng.random((20, 20))
        assert ssim(a, b) == ssim(b, a)

    def test_bounded_by_one(self):
        rng = np.random.default_rng(77)
        for seed in range(5):
            r = np.random.default_rng(seed)
            assert ssim(r.random((16, 16)), r.random((16, 16))) <= 1.0

    def test_noise_reduces_score(self):
        rng = np.random.default_rng(78)
        img = rng.random((32, 32))
        noisy = np.clip(img + rng.normal(scale=0.3, size=img.shape), 0, 1)
        assert ssim(img, noisy) < ssim(img, img)

    def test_monotone_in_noise_level(self):
        rng = np.random.default_rng(79)
        img = rng.random((32, 32))
        noise = rng.standard_normal(img.shape)
        scores = [ssim(img, np.clip(img + s * noise, 0, 1))
                  for s in (0.05, 0.15, 0.45)]
        assert scores[0] > scores[1] > scores[2]

    def test_matches_direct_reference(self):
        # independent direct-loop implementation on a small image
        rng = np.random.default_rng(80)
        a, b = rng.random((14, 14)), rng.random((14, 14))
        win = gaussian_window(11, 1.5)
        c1, c2 = 0.01 ** 2, 0.03 ** 2
        vals = []
        for i in range(4):
            for j in range(4):
                pa, pb = a[i:i + 11, j:j + 11], b[i:i + 11, j:j + 11]
                mu_a, mu_b = (win * pa).sum(), (win * pb).sum()
                va = (win * pa * pa).sum() - mu_a ** 2
                vb = (win * pb * pb).sum() - mu_b ** 2
                cov = (win * pa * pb).sum() - mu_a * mu_b
                vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                            ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
        assert ssim(a, b) == pytest.approx(np.mean(vals), abs=1e-12)

    def test_image_smaller_than_window(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))
