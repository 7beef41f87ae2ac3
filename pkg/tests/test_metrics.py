import math

import numpy as np
import pytest
from scipy import stats

from tqreg.grid import DimensionError
from tqreg.metrics import add_gaussian_noise, gaussian_noise, phantom, psnr, ssim


def box_muller_reference(n, seed):
    """Scalar re-derivation of the documented noise stream."""
    words = [int(w) for w in np.random.PCG64(seed).random_raw(2 * ((n + 1) // 2))]
    out = []
    for k in range(0, len(words), 2):
        u1 = (words[k] >> 11) / 2.0**53
        u2 = (words[k + 1] >> 11) / 2.0**53
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        out += [r * math.cos(2 * math.pi * u2), r * math.sin(2 * math.pi * u2)]
    return np.array(out[:n])


def test_psnr_examples(rng):
    ref = rng.uniform(0, 1, (10, 10))
    assert psnr(ref, ref) == math.inf
    assert psnr(ref + 0.1, ref) == pytest.approx(20.0, abs=1e-9)
    assert psnr(ref + math.sqrt(0.001), ref) == pytest.approx(30.0, abs=1e-9)
    assert psnr(2 * ref, 2 * ref + 0.2, peak=2.0) == pytest.approx(20.0, abs=1e-9)


def test_psnr_symmetric_and_shift_invariant(rng):
    u, v = rng.uniform(0, 1, (2, 3, 8, 8))
    assert psnr(u, v) == psnr(v, u)
    assert psnr(u + 5, v + 5) == pytest.approx(psnr(u, v), rel=1e-12)


def test_psnr_errors():
    with pytest.raises(DimensionError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2)), np.ones((2, 2)), peak=0)


def test_ssim_examples(rng):
    ref = phantom(64) + 0.2 * rng.standard_normal((64, 64))
    assert ssim(ref, ref) == 1.0
    assert ssim(1 - ref, ref) < 0.5
    assert ssim(ref + 1e-4 * rng.standard_normal(ref.shape), ref) >= 0.999


def test_ssim_matches_scikit_image(rng):
    skm = pytest.importorskip("skimage.metrics")
    for shape in [(32, 32), (40, 57)]:
        a = rng.uniform(0, 1, shape)
        b = np.clip(a + 0.1 * rng.standard_normal(shape), 0, 1)
        want = skm.structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                         use_sample_covariance=False)
        assert ssim(a, b) == pytest.approx(want, abs=1e-12)


def test_ssim_color_and_range(rng):
    a, b = rng.uniform(0, 1, (2, 3, 20, 20))
    assert ssim(a, b) == pytest.approx(np.mean([ssim(a[c], b[c]) for c in range(3)]))
    for _ in range(10):
        x, y = rng.uniform(-1, 2, (2, 16, 16))
        assert -1 <= ssim(x, y) <= 1


def test_ssim_window_too_large():
    with pytest.raises(DimensionError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)))


def test_noise_matches_reference_stream():
    for n, seed in [(1, 0), (7, 3), (100, 12345)]:
        np.testing.assert_allclose(gaussian_noise((n,), 1.0, seed), box_muller_reference(n, seed),
                                   rtol=0, atol=1e-14)


def test_noise_examples(rng):
    u = rng.uniform(0, 1, (5, 5))
    np.testing.assert_array_equal(add_gaussian_noise(u, 0.0, 1), u)
    eta = add_gaussian_noise(np.zeros((256, 256)), 0.1, 7)
    assert abs(eta.std() - 0.1) <= 0.003
    np.testing.assert_array_equal(add_gaussian_noise(u, 0.1, 42), add_gaussian_noise(u, 0.1, 42))
    assert not np.array_equal(add_gaussian_noise(u, 0.1, 42), add_gaussian_noise(u, 0.1, 43))
    with pytest.raises(ValueError):
        add_gaussian_noise(u, -1.0, 0)


def test_noise_is_gaussian_and_unclamped():
    z = gaussian_noise((200, 200), 1.0, 5).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3
    assert abs(np.corrcoef(z[:-1], z[1:])[0, 1]) < 0.02
    noisy = add_gaussian_noise(np.ones((64, 64)), 0.1, 0)
    assert noisy.max() > 1.0


def test_noise_layout_is_c_order():
    flat = gaussian_noise((3 * 4 * 5,), 1.0, 9)
    np.testing.assert_array_equal(gaussian_noise((3, 4, 5), 1.0, 9), flat.reshape(3, 4, 5))


def test_phantom_is_piecewise_constant():
    u = phantom(64)
    assert u.shape == (64, 64)
    assert set(np.unique(u)) == {0.05, 0.2, 0.5, 0.8}
