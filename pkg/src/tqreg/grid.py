"""Discrete differential operators on image grids.

Images are plain ``float64`` arrays of shape ``(H, W)`` (gray) or
``(3, H, W)`` (color, channel-planar).  All operators act on the last two
axes and treat leading axes as independent channels.

Conventions (unit grid spacing, homogeneous Neumann boundary):

* ``gradient`` uses forward differences, truncated to zero on the last
  column (x-direction) and last row (y-direction).
* ``divergence`` is the exact negative adjoint of ``gradient``.
* ``laplacian = divergence(gradient(u))`` is the 5-point stencil with
  reflected boundary; it is symmetric negative semidefinite and
  annihilates constants.
"""

import numpy as np

__all__ = [
    "DimensionError",
    "as_image",
    "check_conformal",
    "gradient",
    "divergence",
    "laplacian",
    "apply_T",
    "neighbor_sum",
    "neighbor_count",
    "grad_norm_sq",
    "inner",
]


class DimensionError(ValueError):
    """Raised when two images (or an image and a field) are not conformal."""


def as_image(u, name="image"):
    """Validate ``u`` as an image grid and return it as a float64 array."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 2:
        pass
    elif u.ndim == 3 and u.shape[0] in (1, 3):
        pass
    else:
        raise DimensionError(
            f"{name} must have shape (H, W) or (C, H, W) with C in (1, 3), "
            f"got {u.shape}"
        )
    if u.shape[-1] < 1 or u.shape[-2] < 1:
        raise DimensionError(f"{name} has an empty spatial extent {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError(f"{name} contains non-finite values")
    return u


def check_conformal(*arrays):
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise DimensionError(f"shape mismatch: {shape} vs {a.shape}")


def gradient(u):
    """Forward-difference gradient with Neumann truncation.

    Parameters
    ----------
    u : ndarray, shape (..., H, W)

    Returns
    -------
    ndarray, shape (2, ..., H, W)
        ``g[0]`` is the x-difference ``u[..., i, j+1] - u[..., i, j]``
        (zero on the last column), ``g[1]`` the y-difference (zero on the
        last row).
    """
    u = np.asarray(u, dtype=np.float64)
    g = np.zeros((2,) + u.shape)
    g[0, ..., :, :-1] = u[..., :, 1:] - u[..., :, :-1]
    g[1, ..., :-1, :] = u[..., 1:, :] - u[..., :-1, :]
    return g


def divergence(p):
    """Backward-difference divergence, the negative adjoint of `gradient`.

    ``<gradient(u), p> == -<u, divergence(p)>`` holds for every ``u`` and
    every field ``p`` (including fields whose last column/row is nonzero).
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape[0] != 2:
        raise DimensionError(f"gradient field must have leading axis 2, got {p.shape}")
    px, py = p[0], p[1]
    d = np.zeros(px.shape)
    # x part: -D_x^T applied to px
    d[..., :, :-1] += px[..., :, :-1]
    d[..., :, 1:] -= px[..., :, :-1]
    # y part
    d[..., :-1, :] += py[..., :-1, :]
    d[..., 1:, :] -= py[..., :-1, :]
    return d


def laplacian(u):
    """Neumann 5-point Laplacian, computed directly as div(grad u)."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros(u.shape)
    dx = u[..., :, 1:] - u[..., :, :-1]
    dy = u[..., 1:, :] - u[..., :-1, :]
    out[..., :, :-1] += dx
    out[..., :, 1:] -= dx
    out[..., :-1, :] += dy
    out[..., 1:, :] -= dy
    return out


def apply_T(u, L0, mu):
    """Apply ``T = L0*I - mu*laplacian`` to ``u``."""
    u = np.asarray(u, dtype=np.float64)
    if mu == 0:
        return L0 * u
    return L0 * u - mu * laplacian(u)


def neighbor_sum(u):
    """Sum of the in-grid 4-neighbours of every pixel (off-diagonal of -Laplacian)."""
    u = np.asarray(u, dtype=np.float64)
    s = np.zeros(u.shape)
    s[..., :, :-1] += u[..., :, 1:]
    s[..., :, 1:] += u[..., :, :-1]
    s[..., :-1, :] += u[..., 1:, :]
    s[..., 1:, :] += u[..., :-1, :]
    return s


def neighbor_count(h, w):
    """Number of in-grid neighbours per pixel: 2 at corners, 3 on edges, 4 inside."""
    deg = np.full((h, w), 4.0)
    deg[0, :] -= 1
    deg[-1, :] -= 1
    deg[:, 0] -= 1
    deg[:, -1] -= 1
    return deg


def grad_norm_sq(h, w):
    """Exact squared operator norm of `gradient` on an ``h x w`` grid.

    Equals the largest eigenvalue of ``-laplacian``:
    ``2(1 + cos(pi/w)) + 2(1 + cos(pi/h))``, with a direction dropped when
    its extent is 1.  Always strictly below 8.
    """
    val = 0.0
    if w > 1:
        val += 2.0 * (1.0 + np.cos(np.pi / w))
    if h > 1:
        val += 2.0 * (1.0 + np.cos(np.pi / h))
    return val


def inner(u, v):
    """Euclidean inner product with deterministic pairwise summation."""
    return float(np.sum(np.multiply(u, v)))
