"""Compiled Gauss-Seidel sweeps for ``(L0 - mu*laplacian) u = b`` with Neumann boundary.

Each cell update solves its own row exactly:
``u[i, j] = (b[i, j] + mu * sum(in-grid neighbours)) / (L0 + mu * #neighbours)``.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always", error_model="numpy")
def _relax(u, b, i, j, h, w, L0, mu):
    s = 0.0
    deg = 0
    if j + 1 < w:
        s += u[i, j + 1]
        deg += 1
    if j > 0:
        s += u[i, j - 1]
        deg += 1
    if i + 1 < h:
        s += u[i + 1, j]
        deg += 1
    if i > 0:
        s += u[i - 1, j]
        deg += 1
    u[i, j] = (b[i, j] + mu * s) * (1.0 / (L0 + mu * deg))


@njit(cache=True, nogil=True, error_model="numpy")
def lex_forward(u, b, L0, mu):
    h, w = u.shape
    for i in range(h):
        for j in range(w):
            _relax(u, b, i, j, h, w, L0, mu)


@njit(cache=True, nogil=True, error_model="numpy")
def lex_backward(u, b, L0, mu):
    h, w = u.shape
    for i in range(h - 1, -1, -1):
        for j in range(w - 1, -1, -1):
            _relax(u, b, i, j, h, w, L0, mu)


# Red-black sweeps run on a packed layout: row i of color c holds the cells
# j = 2k + (i + c) % 2, so every neighbour of a cell of one color sits at a
# unit-stride position of the other color's array and the interior loop
# vectorizes.  The arithmetic matches `_relax` term for term.


@njit(cache=True, nogil=True, error_model="numpy")
def _pack(u, c, out):
    h, w = u.shape
    for i in range(h):
        k = 0
        for j in range((i + c) % 2, w, 2):
            out[i, k] = u[i, j]
            k += 1


@njit(cache=True, nogil=True, error_model="numpy")
def _unpack(P, c, u):
    h, w = u.shape
    for i in range(h):
        k = 0
        for j in range((i + c) % 2, w, 2):
            u[i, j] = P[i, k]
            k += 1


@njit(cache=True, inline="always", error_model="numpy")
def _relax_packed(C, O, bc, i, k, q, h, w, L0, mu):
    # O[i, k + q] is the right neighbour, O[i, k + q - 1] the left one
    j = 2 * k + q
    s = 0.0
    deg = 0
    if j + 1 < w:
        s += O[i, k + q]
        deg += 1
    if j > 0:
        s += O[i, k + q - 1]
        deg += 1
    if i + 1 < h:
        s += O[i + 1, k]
        deg += 1
    if i > 0:
        s += O[i - 1, k]
        deg += 1
    C[i, k] = (bc[i, k] + mu * s) * (1.0 / (L0 + mu * deg))


@njit(cache=True, inline="always", error_model="numpy")
def _half_sweep(C, O, bc, c, L0, mu, r4, w):
    h = C.shape[0]
    for i in range(h):
        q = (i + c) % 2
        n = (w - q + 1) // 2
        if i == 0 or i == h - 1:
            for k in range(n):
                _relax_packed(C, O, bc, i, k, q, h, w, L0, mu)
            continue
        k0 = 1 if q == 0 else 0
        k1 = n - 1 if 2 * (n - 1) + q == w - 1 else n
        if k0 == 1:
            _relax_packed(C, O, bc, i, 0, q, h, w, L0, mu)
        # zero-based views keep the loop free of wraparound checks
        row = C[i, k0:k1]
        br = bc[i, k0:k1]
        rt = O[i, k0 + q:k1 + q]
        lt = O[i, k0 + q - 1:k1 + q - 1]
        dn = O[i + 1, k0:k1]
        up = O[i - 1, k0:k1]
        for m in range(k1 - k0):
            row[m] = (br[m] + mu * (rt[m] + lt[m] + dn[m] + up[m])) * r4
        if k1 < n:
            _relax_packed(C, O, bc, i, n - 1, q, h, w, L0, mu)


@njit(cache=True, nogil=True, error_model="numpy")
def rb_sweeps(u, b, L0, mu, n):
    """``n`` symmetric red-black sweeps in place (red, then (black, red) * n)."""
    h, w = u.shape
    m = (w + 1) // 2
    R = np.zeros((h, m))
    B = np.zeros((h, m))
    bR = np.zeros((h, m))
    bB = np.zeros((h, m))
    _pack(u, 0, R)
    _pack(u, 1, B)
    _pack(b, 0, bR)
    _pack(b, 1, bB)
    r4 = 1.0 / (L0 + mu * 4)
    _half_sweep(R, B, bR, 0, L0, mu, r4, w)
    for _ in range(n):
        _half_sweep(B, R, bB, 1, L0, mu, r4, w)
        _half_sweep(R, B, bR, 0, L0, mu, r4, w)
    _unpack(R, 0, u)
    _unpack(B, 1, u)


@njit(cache=True, nogil=True, error_model="numpy")
def residual(u, b, L0, mu, out):
    """``out = b - (L0 - mu*laplacian) u`` in one pass."""
    h, w = u.shape
    for i in range(h):
        for j in range(w):
            s = 0.0
            deg = 0
            if j + 1 < w:
                s += u[i, j + 1]
                deg += 1
            if j > 0:
                s += u[i, j - 1]
                deg += 1
            if i + 1 < h:
                s += u[i + 1, j]
                deg += 1
            if i > 0:
                s += u[i - 1, j]
                deg += 1
            out[i, j] = b[i, j] - (L0 + mu * deg) * u[i, j] + mu * s


@njit(cache=True, nogil=True, error_model="numpy")
def grad_sq(u):
    """``||grad u||^2`` of one plane, summed in a fixed serial order."""
    h, w = u.shape
    s = 0.0
    for i in range(h):
        for j in range(w):
            if j + 1 < w:
                dx = u[i, j + 1] - u[i, j]
                s += dx * dx
            if i + 1 < h:
                dy = u[i + 1, j] - u[i, j]
                s += dy * dy
    return s
