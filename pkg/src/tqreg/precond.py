"""Feasible preconditioners for ``T = L0*I - mu*laplacian``.

Every preconditioner ``M_p`` is exposed through the same affine map

    x+ = x + M_p^{-1} (b - T x),

with ``M_p >= T`` (feasibility).  The induced proximal metric of the
DC iteration is ``M = M_p - (T - L0*I)``, which then satisfies
``M >= L0*I``.

Kinds
-----
``exact``
    ``M_p = T``, solved in the cosine eigenbasis of the Neumann Laplacian.
``richardson``
    ``M_p = c*I`` with ``c >= L0 + mu*||grad||^2``.
``srbgs``
    ``sweeps`` symmetric red-black Gauss-Seidel sweeps.  Red cells have
    ``(i + j)`` even; one sweep updates red, black, black, red.
``sgs_lex``
    ``sweeps`` symmetric lexicographic Gauss-Seidel sweeps (forward then
    backward).

For a single symmetric sweep the preconditioner is
``M_p = (D - E^*) D^{-1} (D - E) = T + E^* D^{-1} E``, where ``D`` is the
diagonal of ``T`` and ``E`` is minus the coupling of each unknown to the
unknowns updated after it in the first half-sweep.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.fft
from scipy.sparse.linalg import LinearOperator, cg

from . import _kernels
from .grid import apply_T, check_conformal, grad_norm_sq, inner, neighbor_count, neighbor_sum

__all__ = [
    "InfeasiblePreconditioner",
    "PreconditionerSpec",
    "MetricSpec",
    "FeasibilityReport",
    "precond_step",
    "srbgs_sweep",
    "exact_solve",
    "apply_Mp",
    "inner_norm_M",
    "check_feasibility",
    "richardson_bound",
    "residual",
    "spec_label",
    "warmup",
]

KINDS = ("srbgs", "sgs_lex", "richardson", "exact")


class InfeasiblePreconditioner(ValueError):
    """The requested preconditioner is not guaranteed to satisfy ``M_p >= T``."""


@dataclass(frozen=True)
class PreconditionerSpec:
    """Which feasible preconditioner to apply.

    ``sweeps`` is used by the Gauss-Seidel kinds.  ``c`` is the Richardson
    constant; ``None`` selects the tight feasible value
    ``L0 + mu*||grad||^2`` for the grid at hand.
    """

    kind: str = "srbgs"
    sweeps: int = 10
    c: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown preconditioner {self.kind!r}; expected one of {KINDS}")
        if int(self.sweeps) != self.sweeps or self.sweeps < 1:
            raise ValueError(f"sweeps must be a positive integer, got {self.sweeps}")
        object.__setattr__(self, "sweeps", int(self.sweeps))

    def richardson_c(self, L0, mu, shape):
        if self.c is not None:
            return float(self.c)
        return richardson_bound(L0, mu, shape)


def richardson_bound(L0, mu, shape):
    """Smallest feasible Richardson constant on a grid of the given shape."""
    h, w = shape[-2], shape[-1]
    return L0 + mu * grad_norm_sq(h, w)


@dataclass(frozen=True)
class MetricSpec:
    """Proximal metric ``M = M_p - (T - L0*I)``.

    With ``precond=None`` the metric is ``L0*I`` (the same as ``exact``).
    """

    L0: float = 1.0
    mu: float = 0.0
    precond: Optional[PreconditionerSpec] = None


def _check_feasible(spec, L0, mu, shape):
    if not L0 > 0:
        raise InfeasiblePreconditioner(f"L0 must be > 0, got {L0}")
    if mu < 0:
        raise InfeasiblePreconditioner(f"mu must be >= 0, got {mu}")
    if spec.kind == "richardson":
        c = spec.richardson_c(L0, mu, shape)
        need = richardson_bound(L0, mu, shape)
        if c < need * (1 - 1e-14):
            raise InfeasiblePreconditioner(
                f"Richardson constant c = {c} is below L0 + mu*||grad||^2 = {need}"
            )


def _planes(u, copy=True):
    """``u`` as a C-contiguous stack of 2D planes."""
    u = np.ascontiguousarray(u, dtype=np.float64).reshape((-1,) + u.shape[-2:])
    return u.copy() if copy else u


def residual(x, b, L0, mu):
    """``b - T x`` for ``T = L0*I - mu*laplacian``, fused into one pass per plane."""
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_conformal(x, b)
    u = _planes(x, copy=False)
    r = _planes(b, copy=False)
    out = np.empty_like(u)
    for k in range(u.shape[0]):
        _kernels.residual(u[k], r[k], float(L0), float(mu), out[k])
    return out.reshape(x.shape)


def _grad_sq(x):
    u = _planes(x, copy=False)
    return float(sum(_kernels.grad_sq(u[k]) for k in range(u.shape[0])))


def _rb_sweeps(x, b, L0, mu, n):
    u = _planes(x)
    r = _planes(b, copy=False)
    for k in range(u.shape[0]):
        # red, (black, red) * n: the second black update of r,b,b,r and the
        # repeated red update between consecutive sweeps are idempotent
        _kernels.rb_sweeps(u[k], r[k], L0, mu, n)
    return u.reshape(x.shape)


def _lex_sweeps(x, b, L0, mu, n):
    u = _planes(x)
    r = _planes(b, copy=False)
    for k in range(u.shape[0]):
        for _ in range(n):
            _kernels.lex_forward(u[k], r[k], L0, mu)
            _kernels.lex_backward(u[k], r[k], L0, mu)
    return u.reshape(x.shape)


def srbgs_sweep(u, b, L0, mu):
    """One symmetric red-black Gauss-Seidel sweep for ``T u = b``."""
    u = np.asarray(u, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_conformal(u, b)
    return _rb_sweeps(u, b, float(L0), float(mu), 1)


def _neumann_eigenvalues(h, w):
    ky = 2.0 - 2.0 * np.cos(np.pi * np.arange(h) / h)
    kx = 2.0 - 2.0 * np.cos(np.pi * np.arange(w) / w)
    return ky[:, None] + kx[None, :]


def exact_solve(b, L0, mu):
    """Solve ``(L0*I - mu*laplacian) x = b`` by orthonormal DCT-II diagonalization."""
    b = np.asarray(b, dtype=np.float64)
    h, w = b.shape[-2:]
    if mu == 0 or h * w == 1:
        return b / L0
    denom = L0 + mu * _neumann_eigenvalues(h, w)
    bh = scipy.fft.dctn(b, type=2, norm="ortho", axes=(-2, -1))
    return scipy.fft.idctn(bh / denom, type=2, norm="ortho", axes=(-2, -1))


def precond_step(x, b, spec, L0, mu):
    """One preconditioned iteration ``x + M_p^{-1}(b - T x)`` toward ``T x = b``."""
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_conformal(x, b)
    L0 = float(L0)
    mu = float(mu)
    _check_feasible(spec, L0, mu, x.shape)
    return _step(x, b, spec, L0, mu)


def _step(x, b, spec, L0, mu):
    if spec.kind == "exact":
        return exact_solve(b, L0, mu)
    if spec.kind == "richardson":
        c = spec.richardson_c(L0, mu, x.shape)
        return x + (b - apply_T(x, L0, mu)) / c
    if spec.kind == "srbgs":
        return _rb_sweeps(x, b, L0, mu, spec.sweeps)
    return _lex_sweeps(x, b, L0, mu, spec.sweeps)


def _diag_T(shape, L0, mu):
    return L0 + mu * neighbor_count(shape[-2], shape[-1])


def _lex_upper(v):
    """Sum over the later lexicographic neighbours (right, below)."""
    s = np.zeros(v.shape)
    s[..., :, :-1] += v[..., :, 1:]
    s[..., :-1, :] += v[..., 1:, :]
    return s


def _lex_lower(v):
    """Adjoint of `_lex_upper` (left, above)."""
    s = np.zeros(v.shape)
    s[..., :, 1:] += v[..., :, :-1]
    s[..., 1:, :] += v[..., :-1, :]
    return s


def _gs_correction(v, kind, L0, mu):
    """``E^* D^{-1} E v`` for one symmetric sweep of the given kind."""
    D = _diag_T(v.shape, L0, mu)
    if kind == "srbgs":
        h, w = v.shape[-2:]
        red = (np.add.outer(np.arange(h), np.arange(w)) % 2) == 0
        black = ~red
        Ev = red * (mu * neighbor_sum(black * v))
        return black * (mu * neighbor_sum(red * (Ev / D)))
    Ev = mu * _lex_upper(v)
    return mu * _lex_lower(Ev / D)


def apply_Mp(v, spec, L0, mu):
    """Matrix-free forward application of ``M_p`` (not its inverse).

    Single Gauss-Seidel sweeps use the closed form ``T + E^* D^{-1} E``;
    multi-sweep preconditioners are applied by solving
    ``M_p^{-1} z = v`` with conjugate gradients.
    """
    v = np.asarray(v, dtype=np.float64)
    _check_feasible(spec, L0, mu, v.shape)
    if spec.kind == "exact":
        return apply_T(v, L0, mu)
    if spec.kind == "richardson":
        return spec.richardson_c(L0, mu, v.shape) * v
    if spec.sweeps == 1:
        return apply_T(v, L0, mu) + _gs_correction(v, spec.kind, L0, mu)

    shape = v.shape
    n = v.size
    zero = np.zeros(shape)

    def minv(z):
        return precond_step(zero, z.reshape(shape), spec, L0, mu).ravel()

    def tmat(z):
        return apply_T(z.reshape(shape), L0, mu).ravel()

    A = LinearOperator((n, n), matvec=minv, dtype=np.float64)
    P = LinearOperator((n, n), matvec=tmat, dtype=np.float64)
    # M_p^{-1} ~ T^{-1}, so T is an excellent preconditioner here
    z0 = tmat(v.ravel())
    z, _ = cg(A, v.ravel(), x0=z0, rtol=1e-15, atol=0.0, maxiter=200, M=P)
    return z.reshape(shape)


def inner_norm_M(u, v, metric):
    """``<u, M v>`` for the metric ``M = M_p - (T - L0*I)``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    check_conformal(u, v)
    spec = metric.precond
    L0, mu = float(metric.L0), float(metric.mu)
    if spec is None or spec.kind == "exact":
        return L0 * inner(u, v)
    if spec.kind == "richardson":
        c = spec.richardson_c(L0, mu, v.shape)
        return (c + L0) * inner(u, v) - inner(u, apply_T(v, L0, mu))
    if spec.sweeps == 1:
        return L0 * inner(u, v) + inner(u, _gs_correction(v, spec.kind, L0, mu))
    return inner(u, apply_Mp(v, spec, L0, mu)) - inner(u, apply_T(v, L0, mu)) + L0 * inner(u, v)


@dataclass
class FeasibilityReport:
    kind: str
    sweeps: int
    shape: tuple
    min_eig_gap: float  # min eig(M_p - T)
    min_eig_shift: float  # min eig(M - L0*I)
    asymmetry: float
    feasible: bool

    def as_row(self):
        n = str(self.sweeps) if self.kind in ("srbgs", "sgs_lex") else "-"
        return (
            f"{self.kind:<10} n={n:<3} grid={self.shape[1]}x{self.shape[0]:<3} "
            f"min eig(Mp-T)={self.min_eig_gap:+.3e} min eig(M-L0 I)={self.min_eig_shift:+.3e} "
            f"asym={self.asymmetry:.1e} {'PASS' if self.feasible else 'FAIL'}"
        )


def spec_label(spec):
    """Short name such as ``srbgs n=10`` or ``richardson c=1.08``."""
    if spec.kind in ("srbgs", "sgs_lex"):
        return f"{spec.kind} n={spec.sweeps}"
    if spec.kind == "richardson" and spec.c is not None:
        return f"richardson c={spec.c:g}"
    return spec.kind


def warmup():
    """Load the compiled sweep kernels so later timings exclude JIT start-up."""
    u = np.zeros((4, 5))
    _rb_sweeps(u, u, 1.0, 1.0, 1)
    _lex_sweeps(u, u, 1.0, 1.0, 1)
    residual(u, u, 1.0, 1.0)
    _grad_sq(u)


def check_feasibility(spec, L0, mu, w, h, tol=1e-10):
    """Dense certificate that ``M_p >= T`` on a ``w x h`` grid.

    ``M_p`` is recovered by inverting the assembled action of
    ``precond_step(0, .)``, so for multi-sweep kinds this is the composed
    preconditioner ``M_{p,n}``.  Feasible iff ``M_p`` is symmetric and
    ``min eig(M_p - T) >= -tol``.
    """
    from .diagnostics import assemble_dense, symmetric_min_eig

    Mp = assemble_dense("M_p", w, h, L0, mu, spec, unchecked=True)
    T = assemble_dense("T", w, h, L0, mu)
    scale = max(1.0, float(np.max(np.abs(Mp))))
    asym = float(np.max(np.abs(Mp - Mp.T))) / scale
    gap = symmetric_min_eig(Mp - T)
    M = Mp - T + L0 * np.eye(T.shape[0])
    shift = symmetric_min_eig(M - L0 * np.eye(T.shape[0]))
    ok = asym <= tol and gap >= -tol
    return FeasibilityReport(spec.kind, spec.sweeps, (h, w), gap, shift, asym, ok)
