import numpy as np
import pytest

from tqreg.diagnostics import assemble_dense
from tqreg.grid import DimensionError, gradient, laplacian
from tqreg.model import (
    ForwardOp,
    ModelParams,
    auxiliary_E,
    dc_split_identity_check,
    energy,
    grad_f,
    objective,
    subgradient_P2,
)
from tqreg.precond import MetricSpec, PreconditionerSpec

from oracles import brute_energy, brute_P2, convolution_matrix

VARIANTS = ("anisotropic", "isotropic")


def _mixed_image(seed, shape=(8, 8)):
    return np.random.default_rng(seed).uniform(0, 1, shape)


def test_constant_image_has_zero_energy():
    u = np.full((4, 5), 0.3)
    e = energy(u, ModelParams(3, 0.01), u)
    assert (e.f_val, e.F_val) == (0.0, 0.0)
    assert e.p1_val == e.p2_val


def test_energy_quadratic_branch():
    u = np.array([[0.0, 1.0]])
    e = energy(u, ModelParams(3, 0.01), u)
    assert e.F_val == pytest.approx(0.005, rel=1e-12)
    assert brute_energy(u, u, 3, 0.01, "anisotropic") == pytest.approx(0.005, rel=1e-12)


def test_energy_truncated_branch():
    u = np.array([[0.0, 20.0]])
    for variant in VARIANTS:
        e = energy(u, ModelParams(3, 0.01, variant), u)
        assert e.F_val == pytest.approx(1.5, rel=1e-12)


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("shape", [(5, 6), (3, 4, 5)])
def test_energy_matches_brute_force(variant, shape):
    rng = np.random.default_rng(3)
    u = rng.uniform(0, 1, shape)
    u0 = rng.uniform(0, 1, shape)
    e = energy(u, ModelParams(0.3, 1.0, variant), u0)
    assert e.F_val == pytest.approx(brute_energy(u, u0, 0.3, 1.0, variant), rel=1e-12)
    assert e.p2_val == pytest.approx(brute_P2(u, 0.3, 1.0, variant), rel=1e-12)


@pytest.mark.parametrize("variant", VARIANTS)
def test_breakdown_invariants(variant):
    for seed in range(20):
        u = _mixed_image(seed)
        e = energy(u, ModelParams(0.5, 1.0, variant), u * 0.9)
        assert e.F_val == pytest.approx(e.f_val + e.p1_val - e.p2_val, rel=1e-12)
        assert e.p1_val >= e.p2_val >= 0


def test_isotropic_color_couples_channels():
    # each channel alone stays below the threshold, their sum does not
    u = np.zeros((3, 1, 2))
    u[:, 0, 1] = 0.6
    e = energy(u, ModelParams(0.5, 1.0, "isotropic"), u)
    assert e.F_val == pytest.approx(0.25)  # mu/2 * min(3 * 0.36, 0.5)
    e = energy(u, ModelParams(0.5, 1.0, "anisotropic"), u)
    assert e.F_val == pytest.approx(3 * 0.5 * 0.36)


def test_truncation_bound_and_ceiling():
    lam, mu = 0.2, 1.0
    rng = np.random.default_rng(0)
    u = rng.uniform(0, 1, (6, 6))
    p = energy(u, ModelParams(lam, mu), u).F_val
    assert 0 <= p <= lam / 2 * 36 * 2
    # checkerboard with jumps above threshold in every interior term
    cb = 10.0 * (np.add.outer(np.arange(6), np.arange(6)) % 2)
    n_terms = 2 * 6 * 5  # nonzero forward differences in both directions
    assert energy(cb, ModelParams(lam, mu), cb).F_val == pytest.approx(lam / 2 * n_terms)


def test_dc_split_identity():
    p = ModelParams(3, 0.01)
    assert dc_split_identity_check(np.full((4, 4), 7.0), p) == 0.0
    rng = np.random.default_rng(1)
    for k in range(100):
        params = ModelParams(0.4, 1.0, VARIANTS[k % 2])
        u = rng.uniform(0, 1, (6, 6))
        P = energy(u, params, u).F_val
        assert dc_split_identity_check(u, params) <= 1e-12 * (1 + abs(P))


def test_dc_split_identity_at_kink():
    # |grad u|^2 = lambda/mu exactly at one pixel
    u = np.array([[0.0, 0.5]])
    params = ModelParams(0.25, 1.0)
    assert dc_split_identity_check(u, params) == 0.0


def test_grad_f_identity():
    u = np.arange(6.0).reshape(2, 3)
    p = ModelParams(3, 0.01)
    assert np.all(grad_f(u, p, u) == 0)
    np.testing.assert_array_equal(grad_f(u, p, np.zeros_like(u)), u)


def test_grad_f_blur_matches_dense():
    k = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 16
    p = ModelParams(3, 0.01, forward_op=ForwardOp.convolution(k), L0=1.0)
    rng = np.random.default_rng(2)
    u, u0 = rng.standard_normal((2, 6, 6))
    A = convolution_matrix(k, 6, 6)
    want = A.T @ (A @ u.ravel() - u0.ravel())
    np.testing.assert_allclose(grad_f(u, p, u0).ravel(), want, atol=1e-12)


def test_convolution_adjoint_and_lipschitz():
    k = np.array([[0.0, -1.0, 0.5], [1.0, 3.0, 0.0], [0.2, 0.0, -0.7]])
    op = ForwardOp.convolution(k)
    rng = np.random.default_rng(4)
    u, v = rng.standard_normal((2, 7, 5))
    lhs = np.sum(op.apply(u) * v)
    rhs = np.sum(u * op.adjoint(v))
    assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v) * 5
    A = convolution_matrix(k, 7, 5)
    assert op.lipschitz >= np.linalg.norm(A, 2) ** 2
    assert ForwardOp().lipschitz == 1.0


def test_grad_f_lipschitz_witness():
    k = np.ones((3, 3)) / 9
    params = ModelParams(1, 1, forward_op=ForwardOp.convolution(k), L0=1.0)
    rng = np.random.default_rng(5)
    u0 = rng.standard_normal((8, 8))
    for _ in range(20):
        u, v = rng.standard_normal((2, 8, 8))
        d = np.linalg.norm(grad_f(u, params, u0) - grad_f(v, params, u0))
        assert d <= params.L * np.linalg.norm(u - v) * (1 + 1e-12)


def test_params_validation():
    with pytest.raises(ValueError, match="lambda"):
        ModelParams(0, 0.01)
    with pytest.raises(ValueError, match="mu"):
        ModelParams(3, -1)
    with pytest.raises(ValueError, match="L0"):
        ModelParams(3, 0.01, L0=0.5)
    with pytest.raises(ValueError, match="variant"):
        ModelParams(3, 0.01, "diagonal")
    assert ModelParams(3, 0.01, "itq").variant == "isotropic"
    assert ModelParams(3, 0.01).tau == pytest.approx(300)


def test_energy_dimension_mismatch():
    with pytest.raises(DimensionError):
        energy(np.zeros((3, 3)), ModelParams(1, 1), np.zeros((3, 4)))


@pytest.mark.parametrize("variant", VARIANTS)
def test_subgradient_zero_on_smooth_image(variant):
    u = np.linspace(0, 1, 20).reshape(4, 5)
    assert np.all(subgradient_P2(u, ModelParams(3, 0.01, variant)) == 0)


@pytest.mark.parametrize("variant", VARIANTS)
def test_subgradient_all_active_is_scaled_laplacian(variant):
    # steep ramps in both directions on every term
    i, j = np.mgrid[0:5, 0:6]
    u = 3.0 * i + 5.0 * j
    params = ModelParams(1.0, 1.0, variant)
    xi = subgradient_P2(u, params)
    # interior terms are active; the truncated boundary terms are zero anyway
    np.testing.assert_allclose(xi, -params.mu * laplacian(u), atol=1e-12)


def test_subgradient_tie_takes_active_branch():
    u = np.array([[0.0, 0.5]])
    params = ModelParams(0.25, 1.0)  # tau = 0.25 = |grad u|^2
    xi = subgradient_P2(u, params)
    np.testing.assert_allclose(xi, -laplacian(u))


def _kink_margin(u, params):
    g = gradient(u)
    sq = g * g
    if params.variant == "isotropic":
        sq = sq[0] + sq[1]
    return float(np.min(np.abs(np.sqrt(sq) - np.sqrt(params.tau))))


@pytest.mark.parametrize("variant", VARIANTS)
def test_subgradient_matches_finite_differences(variant):
    params = ModelParams(0.4, 1.0, variant)
    seed = 0
    while True:
        u = _mixed_image(seed)
        if _kink_margin(u, params) > 0.01:
            break
        seed += 1
    xi = subgradient_P2(u, params)
    assert 0 < np.mean(xi != 0) < 1  # both branches present
    h = 1e-6
    fd = np.zeros_like(u)
    for k in range(u.size):
        e = np.zeros(u.size)
        e[k] = h
        e = e.reshape(u.shape)
        fd.flat[k] = (brute_P2(u + e, params.lam, params.mu, variant)
                      - brute_P2(u - e, params.lam, params.mu, variant)) / (2 * h)
    assert np.max(np.abs(fd - xi)) <= 1e-6


@pytest.mark.parametrize("variant", VARIANTS)
def test_subgradient_inequality(variant):
    params = ModelParams(0.3, 1.0, variant)
    rng = np.random.default_rng(6)
    for _ in range(100):
        u, v = rng.uniform(0, 1, (2, 6, 6))
        slack = (brute_P2(v, 0.3, 1.0, variant) - brute_P2(u, 0.3, 1.0, variant)
                 - np.sum(subgradient_P2(u, params) * (v - u)))
        assert slack >= -1e-10


@pytest.mark.parametrize("variant", VARIANTS)
def test_subgradient_homogeneity_of_indicator(variant):
    u = _mixed_image(11)
    lam, mu = 0.3, 1.0
    for c in (2.0, -0.5):
        # scaling u by c and sqrt(tau) by |c| keeps every branch
        scaled = ModelParams(lam * c * c, mu, variant)
        np.testing.assert_allclose(
            subgradient_P2(c * u, scaled), c * subgradient_P2(u, ModelParams(lam, mu, variant)), atol=1e-13
        )


def test_auxiliary_E_examples():
    params = ModelParams(0.3, 1.0)
    rng = np.random.default_rng(7)
    x, u0 = rng.uniform(0, 1, (2, 4, 4))
    F = objective(x, params, u0)
    assert auxiliary_E(x, x, params, u0, MetricSpec(1.0)) == F
    assert auxiliary_E(x, x - 1.0, params, u0, MetricSpec(1.0)) == pytest.approx(F + 16 / 2)


def test_auxiliary_E_srbgs_metric_matches_dense():
    L0, mu = 1.0, 0.5
    params = ModelParams(0.3, mu)
    spec = PreconditionerSpec("srbgs", 1)
    rng = np.random.default_rng(8)
    x, y, u0 = rng.uniform(0, 1, (3, 4, 4))
    M = assemble_dense("M", 4, 4, L0, mu, spec)
    d = (x - y).ravel()
    want = objective(x, params, u0) + 0.5 * d @ M @ d
    got = auxiliary_E(x, y, params, u0, MetricSpec(L0, mu, spec))
    assert got == pytest.approx(want, rel=1e-12)
