"""Image quality metrics and the seeded noise model of the denoising experiments.

Noise generator
---------------
``add_gaussian_noise`` draws raw 64-bit words from NumPy's ``PCG64`` bit
generator (PCG XSL-RR 128/64, whose output stream is fixed for a given
seed), maps each word to a double in ``[0, 1)`` as ``(word >> 11) * 2**-53``
and turns consecutive pairs ``(u1, u2)`` into two normals with the
Box-Muller transform::

    r = sqrt(-2 log(1 - u1));  z0 = r cos(2 pi u2);  z1 = r sin(2 pi u2)

Normals fill the image in C order (channel, row, column).
"""

import math

import numpy as np
from scipy import ndimage

from .grid import DimensionError, check_conformal

__all__ = ["psnr", "ssim", "add_gaussian_noise", "gaussian_noise", "phantom"]


def psnr(u, ref, peak=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` when the images coincide."""
    u = np.asarray(u, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    check_conformal(u, ref)
    if peak <= 0:
        raise ValueError("peak must be > 0")
    mse = float(np.mean((u - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _ssim_plane(x, y, data_range, K1, K2, sigma, radius):
    C1 = (K1 * data_range) ** 2
    C2 = (K2 * data_range) ** 2
    truncate = radius / sigma

    def blur(a):
        return ndimage.gaussian_filter(a, sigma, mode="reflect", truncate=truncate)

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    num = (2 * mx * my + C1) * (2 * sxy + C2)
    den = (mx * mx + my * my + C1) * (sxx + syy + C2)
    smap = num / den
    # discard the border where the window leaves the image
    return float(smap[radius:-radius, radius:-radius].mean())


def ssim(u, ref, data_range=1.0, K1=0.01, K2=0.03, sigma=1.5, win_size=11):
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Color images return the mean over channels.  Only windows that lie
    completely inside the image contribute.
    """
    u = np.asarray(u, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    check_conformal(u, ref)
    if win_size % 2 == 0:
        raise ValueError("win_size must be odd")
    if min(u.shape[-2:]) < win_size:
        raise DimensionError(f"image {u.shape[-2:]} is smaller than the {win_size}x{win_size} window")
    radius = win_size // 2
    if u.ndim == 2:
        return _ssim_plane(u, ref, data_range, K1, K2, sigma, radius)
    return float(np.mean([
        _ssim_plane(a, b, data_range, K1, K2, sigma, radius) for a, b in zip(u, ref)
    ]))


def gaussian_noise(shape, sigma, seed):
    """Deterministic i.i.d. ``N(0, sigma^2)`` field (see module docstring)."""
    n = int(np.prod(shape))
    words = np.random.PCG64(seed).random_raw(2 * ((n + 1) // 2))
    uni = (words >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
    u1, u2 = uni[0::2], uni[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.empty(2 * u1.size)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return sigma * z[:n].reshape(shape)


def add_gaussian_noise(u, sigma, seed):
    """``u`` plus seeded Gaussian noise of standard deviation ``sigma`` (no clamping)."""
    u = np.asarray(u, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return u.copy()
    return u + gaussian_noise(u.shape, sigma, seed)


def phantom(n=64):
    """Piecewise-constant ``n x n`` test image with values in [0, 1].

    Background 0.2, a bright rectangle (0.8), a mid-gray disk (0.5) and a
    dark bar (0.05).
    """
    yy, xx = np.mgrid[0:n, 0:n] / n
    u = np.full((n, n), 0.2)
    u[(yy > 0.15) & (yy < 0.45) & (xx > 0.12) & (xx < 0.62)] = 0.8
    u[(yy - 0.68) ** 2 + (xx - 0.62) ** 2 < 0.23 ** 2] = 0.5
    u[(yy > 0.55) & (yy < 0.9) & (xx > 0.1) & (xx < 0.22)] = 0.05
    return u
