"""Truncated quadratic objectives and their difference-of-convex split.

For an image ``u`` with observation ``u0`` the objective is

    F(u) = f(u) + P(u),   f(u) = ||A u - u0||^2 / 2,

with the weak-membrane regularizer ``P = P1 - P2`` where, per term ``a``
(a squared gradient magnitude) and threshold ``tau = lambda / mu``,

    P  = mu/2 * min(a, tau)
    P1 = mu/2 * (a + tau)
    P2 = mu/2 * max(a, tau).

The isotropic model has one term per pixel, ``a = |D_x u|^2 + |D_y u|^2``
summed over color channels.  The anisotropic model has one term per pixel,
direction and channel.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .grid import DimensionError, check_conformal, divergence, gradient, inner

__all__ = [
    "ForwardOp",
    "ModelParams",
    "EnergyBreakdown",
    "energy",
    "objective",
    "dc_split_identity_check",
    "grad_f",
    "subgradient_P2",
    "auxiliary_E",
]

_VARIANTS = {
    "isotropic": "isotropic",
    "iso": "isotropic",
    "itq": "isotropic",
    "anisotropic": "anisotropic",
    "aniso": "anisotropic",
    "atq": "anisotropic",
}


@dataclass(frozen=True)
class ForwardOp:
    """Linear forward operator ``A`` of the data term.

    ``kind="identity"`` (denoising) or ``kind="convolution"`` with a small
    odd-sized 2D kernel and zero boundary.  The adjoint of the convolution
    is the matching correlation, so the pair is exactly adjoint.
    """

    kind: str = "identity"
    kernel: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("identity", "convolution"):
            raise ValueError(f"unknown forward operator kind {self.kind!r}")
        if self.kind == "convolution":
            k = np.asarray(self.kernel, dtype=np.float64)
            if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
                raise ValueError("convolution kernel must be 2D with odd sizes")
            object.__setattr__(self, "kernel", k)

    @classmethod
    def convolution(cls, kernel):
        return cls("convolution", np.asarray(kernel, dtype=np.float64))

    @property
    def lipschitz(self):
        """Upper bound on ``||A||^2``, the Lipschitz constant of grad f."""
        if self.kind == "identity":
            return 1.0
        return float(np.sum(np.abs(self.kernel))) ** 2

    def _channelwise(self, fn, u):
        if u.ndim == 2:
            return fn(u, self.kernel, mode="constant", cval=0.0)
        return np.stack([fn(c, self.kernel, mode="constant", cval=0.0) for c in u])

    def apply(self, u):
        if self.kind == "identity":
            return u
        return self._channelwise(ndimage.convolve, u)

    def adjoint(self, v):
        if self.kind == "identity":
            return v
        return self._channelwise(ndimage.correlate, v)


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the ITQ/ATQ model.

    ``L0`` defaults to the Lipschitz constant of ``grad f`` (1 for
    denoising).  Any ``L0 >= L`` is admissible; larger values shift the
    linear system ``T = L0*I - mu*laplacian`` towards the identity.
    """

    lam: float
    mu: float
    variant: str = "anisotropic"
    L0: Optional[float] = None
    forward_op: ForwardOp = field(default_factory=ForwardOp)

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be > 0, got {self.mu}")
        try:
            object.__setattr__(self, "variant", _VARIANTS[self.variant.lower()])
        except KeyError:
            raise ValueError(f"unknown variant {self.variant!r}") from None
        L = self.forward_op.lipschitz
        if self.L0 is None:
            object.__setattr__(self, "L0", L)
        elif not self.L0 >= L:
            raise ValueError(f"L0 = {self.L0} must be >= L = {L}")
        object.__setattr__(self, "L0", float(self.L0))

    @property
    def tau(self):
        """Truncation threshold on squared gradient magnitudes."""
        return self.lam / self.mu

    @property
    def L(self):
        return self.forward_op.lipschitz


@dataclass
class EnergyBreakdown:
    f_val: float
    p1_val: float
    p2_val: float
    F_val: float
    E_val: Optional[float] = None


def _terms(g, variant):
    """Squared magnitudes entering the truncation, from a gradient field."""
    sq = g * g
    if variant == "anisotropic":
        return sq
    a = sq[0] + sq[1]
    if a.ndim == 3:
        a = a.sum(axis=0)
    return a


def _residual(u, params, u0):
    check_conformal(u, u0)
    return params.forward_op.apply(u) - u0


def energy(u, params, u0, g=None):
    """Evaluate data term, both convex parts and the objective.

    ``F_val`` is computed from ``min`` directly rather than as
    ``p1 - p2``; the large constant ``lambda/2`` per term would otherwise
    cancel and cost accuracy.
    """
    u = np.asarray(u, dtype=np.float64)
    r = _residual(u, params, np.asarray(u0, dtype=np.float64))
    f_val = 0.5 * inner(r, r)
    if g is None:
        g = gradient(u)
    a = _terms(g, params.variant)
    tau = params.tau
    half_mu = 0.5 * params.mu
    p_val = half_mu * float(np.sum(np.minimum(a, tau)))
    p1_val = half_mu * float(np.sum(a)) + 0.5 * params.lam * a.size
    p2_val = half_mu * float(np.sum(np.maximum(a, tau)))
    return EnergyBreakdown(f_val, p1_val, p2_val, f_val + p_val)


def objective(u, params, u0, g=None):
    return energy(u, params, u0, g=g).F_val


def dc_split_identity_check(u, params):
    """Largest per-term deviation ``|P - (P1 - P2)|`` over the image."""
    a = _terms(gradient(u), params.variant)
    tau = params.tau
    half_mu = 0.5 * params.mu
    p = half_mu * np.minimum(a, tau)
    p1 = half_mu * (a + tau)
    p2 = half_mu * np.maximum(a, tau)
    return float(np.max(np.abs(p - (p1 - p2))))


def grad_f(u, params, u0):
    """Gradient ``A^*(A u - u0)`` of the data term."""
    u = np.asarray(u, dtype=np.float64)
    return params.forward_op.adjoint(_residual(u, params, np.asarray(u0, dtype=np.float64)))


def subgradient_P2(u, params, g=None):
    """The ``s = 1`` subgradient of ``P2``.

    The indicator is 1 where the squared magnitude reaches the threshold
    (ties included) and 0 below it; the result is ``mu * grad^*(chi grad u)``.
    """
    if g is None:
        g = gradient(u)
    a = _terms(g, params.variant)
    chi = a >= params.tau
    if not chi.any():
        return np.zeros(g.shape[1:])
    # isotropic chi has shape (H, W) and broadcasts over directions and channels
    return -params.mu * divergence(g * chi)


def auxiliary_E(x, y, params, u0, metric):
    """``F(x) + ||x - y||_M^2 / 2`` for the metric described by ``metric``."""
    from .precond import inner_norm_M

    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {y.shape}")
    d = x - y
    return objective(x, params, u0) + 0.5 * inner_norm_M(d, d, metric)
