import numpy as np
import pytest

from tqreg.diagnostics import GridTooLarge, assemble_dense, sgs_identity_dense
from tqreg.grid import DimensionError, apply_T
from tqreg.precond import (
    InfeasiblePreconditioner,
    MetricSpec,
    PreconditionerSpec,
    apply_Mp,
    check_feasibility,
    exact_solve,
    inner_norm_M,
    precond_step,
    residual,
    richardson_bound,
    spec_label,
    srbgs_sweep,
)

from oracles import T_matrix, order_of, sgs_preconditioner, symmetric_gs

ALL_SPECS = [
    PreconditionerSpec("srbgs", 1),
    PreconditionerSpec("srbgs", 3),
    PreconditionerSpec("srbgs", 10),
    PreconditionerSpec("sgs_lex", 1),
    PreconditionerSpec("sgs_lex", 2),
    PreconditionerSpec("richardson"),
    PreconditionerSpec("exact"),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=spec_label)
def test_single_pixel_returns_b_over_L0(spec):
    # richardson needs c = L0 on a 1x1 grid to be exact
    if spec.kind == "richardson":
        spec = PreconditionerSpec("richardson", c=2.0)
    x = np.array([[5.0]])
    b = np.array([[3.0]])
    assert precond_step(x, b, spec, 2.0, 0.7)[0, 0] == 1.5


@pytest.mark.parametrize("spec", ALL_SPECS, ids=spec_label)
def test_solution_is_fixed_point(spec, rng):
    L0, mu = 1.0, 0.3
    b = rng.standard_normal((6, 7))
    x = exact_solve(b, L0, mu)
    np.testing.assert_allclose(precond_step(x, b, spec, L0, mu), x, atol=1e-10)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=spec_label)
def test_step_is_affine(spec, rng):
    L0, mu = 1.0, 0.5
    x1, x2, b1, b2 = rng.standard_normal((4, 5, 5))
    a = 0.3
    lhs = precond_step(a * x1 + (1 - a) * x2, a * b1 + (1 - a) * b2, spec, L0, mu)
    rhs = a * precond_step(x1, b1, spec, L0, mu) + (1 - a) * precond_step(x2, b2, spec, L0, mu)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_srbgs_one_sweep_matches_dense_preconditioner(rng):
    L0, mu = 1.0, 0.3
    T = T_matrix(4, 4, L0, mu)
    Mp = sgs_preconditioner(T, order_of("redblack", 4, 4))
    x, b = rng.standard_normal((2, 4, 4))
    want = x.ravel() + np.linalg.solve(Mp, b.ravel() - T @ x.ravel())
    got = precond_step(x, b, PreconditionerSpec("srbgs", 1), L0, mu)
    np.testing.assert_allclose(got.ravel(), want, atol=1e-12)


def test_sgs_lex_one_sweep_matches_dense_preconditioner(rng):
    L0, mu = 1.0, 0.3
    T = T_matrix(3, 5, L0, mu)
    Mp = sgs_preconditioner(T, order_of("lex", 3, 5))
    x, b = rng.standard_normal((2, 3, 5))
    want = x.ravel() + np.linalg.solve(Mp, b.ravel() - T @ x.ravel())
    got = precond_step(x, b, PreconditionerSpec("sgs_lex", 1), L0, mu)
    np.testing.assert_allclose(got.ravel(), want, atol=1e-12)


@pytest.mark.parametrize("h,w", [(3, 3), (1, 6), (6, 1), (5, 7), (8, 9), (2, 2), (17, 4)])
@pytest.mark.parametrize("kind", ["srbgs", "sgs_lex"])
def test_sweeps_match_dense_gauss_seidel(kind, h, w):
    rng = np.random.default_rng(h * 31 + w)
    L0, mu = 1.0, 0.01 if (h, w) == (3, 3) else 0.7
    x, b = rng.standard_normal((2, h, w))
    T = T_matrix(h, w, L0, mu)
    order = order_of("lex" if kind == "sgs_lex" else "redblack", h, w)
    for n in (1, 3):
        want = symmetric_gs(T, x.ravel(), b.ravel(), order, n)
        got = precond_step(x, b, PreconditionerSpec(kind, n), L0, mu)
        np.testing.assert_allclose(got.ravel(), want, atol=1e-12)


def test_srbgs_sweep_examples(rng):
    u = rng.standard_normal((5, 5))
    L0, mu = 1.0, 0.01
    np.testing.assert_allclose(srbgs_sweep(u, apply_T(u, L0, mu), L0, mu), u, atol=1e-14)
    b = rng.standard_normal((5, 5))
    np.testing.assert_array_equal(srbgs_sweep(u, b, 2.0, 0.0), b / 2.0)


def test_color_planes_are_independent(rng):
    x, b = rng.standard_normal((2, 3, 6, 5))
    spec = PreconditionerSpec("srbgs", 2)
    got = precond_step(x, b, spec, 1.0, 0.4)
    for c in range(3):
        np.testing.assert_array_equal(got[c], precond_step(x[c], b[c], spec, 1.0, 0.4))


@pytest.mark.parametrize("kind", ["srbgs", "sgs_lex"])
def test_n_sweeps_compose(kind, rng):
    x, b = rng.standard_normal((2, 7, 6))
    L0, mu = 1.0, 0.5
    one = PreconditionerSpec(kind, 1)
    y = x
    for _ in range(4):
        y = precond_step(y, b, one, L0, mu)
    np.testing.assert_allclose(precond_step(x, b, PreconditionerSpec(kind, 4), L0, mu), y, atol=1e-13)


def test_richardson_step_formula(rng):
    x, b = rng.standard_normal((2, 4, 4))
    spec = PreconditionerSpec("richardson", c=2.5)
    want = x + (b - apply_T(x, 1.0, 0.1)) / 2.5
    np.testing.assert_allclose(precond_step(x, b, spec, 1.0, 0.1), want, atol=1e-15)


def test_exact_solve_examples(rng):
    np.testing.assert_allclose(exact_solve(np.full((5, 6), 2.0), 2.0, 0.3), 1.0, atol=1e-14)
    b = rng.standard_normal((4, 4))
    np.testing.assert_array_equal(exact_solve(b, 4.0, 0.0), b / 4.0)


@pytest.mark.parametrize("h,w", [(1, 1), (2, 3), (4, 4), (5, 8), (8, 8)])
def test_exact_solve_matches_dense(h, w, rng):
    L0, mu = 1.0, 0.37
    b = rng.standard_normal((h, w))
    xd = np.linalg.solve(T_matrix(h, w, L0, mu), b.ravel())
    x = exact_solve(b, L0, mu)
    assert np.linalg.norm(x.ravel() - xd) <= 1e-10 * np.linalg.norm(xd)


@pytest.mark.parametrize("n", [16, 256])
def test_exact_solve_residual(n, rng):
    b = rng.standard_normal((n, n))
    x = exact_solve(b, 1.0, 0.01)
    assert np.linalg.norm(apply_T(x, 1.0, 0.01) - b) <= 1e-10 * np.linalg.norm(b)
    x = exact_solve(b, 1.0, 50.0)
    assert np.linalg.norm(apply_T(x, 1.0, 50.0) - b) <= 1e-10 * np.linalg.norm(b)


def test_feasibility_examples():
    rep = check_feasibility(PreconditionerSpec("exact"), 1.0, 0.01, 4, 4)
    assert rep.feasible and abs(rep.min_eig_gap) <= 1e-12
    for n in range(1, 9):
        rep = check_feasibility(PreconditionerSpec("richardson", c=1.0 + 8 * 0.01), 1.0, 0.01, n, n)
        assert rep.feasible
    for n in (1, 3):
        assert check_feasibility(PreconditionerSpec("srbgs", n), 1.0, 0.01, 4, 4).feasible


def test_infeasible_richardson_is_rejected():
    spec = PreconditionerSpec("richardson", c=1.0)
    with pytest.raises(InfeasiblePreconditioner):
        precond_step(np.zeros((8, 8)), np.ones((8, 8)), spec, 1.0, 0.01)
    rep = check_feasibility(spec, 1.0, 0.01, 8, 8)
    assert not rep.feasible and rep.min_eig_gap < 0
    assert "FAIL" in rep.as_row() and "n=-" in rep.as_row()


def test_richardson_bound_is_tight():
    # the bound is ||grad||^2 on the actual grid, not the generic 8
    assert richardson_bound(1.0, 0.5, (1, 1)) == 1.0
    assert richardson_bound(1.0, 0.5, (64, 64)) < 1.0 + 0.5 * 8
    spec = PreconditionerSpec("richardson")
    assert check_feasibility(spec, 1.0, 0.5, 6, 6).feasible


def test_step_errors():
    spec = PreconditionerSpec()
    with pytest.raises(DimensionError):
        precond_step(np.zeros((3, 3)), np.zeros((3, 4)), spec, 1.0, 0.1)
    with pytest.raises(InfeasiblePreconditioner):
        precond_step(np.zeros((3, 3)), np.zeros((3, 3)), spec, 0.0, 0.1)
    with pytest.raises(ValueError):
        PreconditionerSpec("jacobi")
    with pytest.raises(ValueError):
        PreconditionerSpec("srbgs", 0)
    with pytest.raises(GridTooLarge):
        check_feasibility(spec, 1.0, 0.1, 70, 70)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=spec_label)
def test_error_contracts_in_Mp_norm(spec):
    # iteration matrix I - M_p^{-1} T has M_p-norm at most one
    L0, mu = 1.0, 0.4
    Mp = assemble_dense("M_p", 4, 4, L0, mu, spec)
    T = T_matrix(4, 4, L0, mu)
    S = np.linalg.cholesky(0.5 * (Mp + Mp.T)).T
    G = np.eye(16) - np.linalg.solve(Mp, T)
    assert np.linalg.norm(S @ G @ np.linalg.inv(S), 2) <= 1 + 1e-10


@pytest.mark.parametrize("kind", ["srbgs", "sgs_lex"])
@pytest.mark.parametrize("n", [3, 4])
def test_sgs_identity(kind, n):
    Mp = assemble_dense("M_p", n, n, 1.0, 0.3, PreconditionerSpec(kind, 1))
    np.testing.assert_allclose(Mp, sgs_identity_dense(kind, n, n, 1.0, 0.3), atol=1e-12)
    np.testing.assert_allclose(Mp, sgs_preconditioner(T_matrix(n, n, 1.0, 0.3), order_of(
        "lex" if kind == "sgs_lex" else "redblack", n, n)), atol=1e-12)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=spec_label)
def test_apply_Mp_and_metric_match_dense(spec, rng):
    L0, mu = 1.0, 0.2
    Mp = assemble_dense("M_p", 5, 4, L0, mu, spec)
    M = assemble_dense("M", 5, 4, L0, mu, spec)
    u, v = rng.standard_normal((2, 4, 5))
    np.testing.assert_allclose(apply_Mp(v, spec, L0, mu).ravel(), Mp @ v.ravel(), atol=1e-9)
    got = inner_norm_M(u, v, MetricSpec(L0, mu, spec))
    assert got == pytest.approx(u.ravel() @ M @ v.ravel(), abs=1e-9)
    assert np.linalg.eigvalsh(0.5 * (M + M.T))[0] >= L0 - 1e-10


def test_residual_kernel_matches_reference(rng):
    for shape in [(1, 1), (1, 5), (4, 1), (7, 9), (3, 6, 5)]:
        x, b = rng.standard_normal((2,) + shape)
        np.testing.assert_allclose(residual(x, b, 1.3, 0.7), b - apply_T(x, 1.3, 0.7), atol=1e-13)
