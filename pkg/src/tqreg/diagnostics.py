"""Dense oracles, descent audits and run summaries for desk-scale verification."""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .grid import apply_T, gradient, laplacian

__all__ = [
    "GridTooLarge",
    "MAX_DENSE",
    "assemble_dense",
    "symmetric_min_eig",
    "sgs_identity_dense",
    "AuditReport",
    "audit_descent",
    "Summary",
    "summarize_run",
    "verify_suite",
]

MAX_DENSE = 4096


class GridTooLarge(ValueError):
    """Dense assembly requested on more than `MAX_DENSE` unknowns."""


def _basis_apply(fn, h, w):
    n = h * w
    cols = []
    e = np.zeros((h, w))
    for k in range(n):
        e.flat[k] = 1.0
        cols.append(np.asarray(fn(e)).ravel())
        e.flat[k] = 0.0
    return np.stack(cols, axis=1)


def assemble_dense(op, w, h, L0=1.0, mu=0.0, spec=None, unchecked=False):
    """Dense matrix of a grid operator on an ``w x h`` grid (row-major unknowns).

    ``op`` is one of ``gradient`` (shape ``2N x N``, x-block first),
    ``laplacian``, ``T``, ``M_p`` or ``M``.  ``M_p`` is obtained by
    inverting the assembled map ``b -> precond_step(0, b)``, so for
    multi-sweep specs it is the composed preconditioner.
    """
    from .precond import _check_feasible, _step

    if w * h > MAX_DENSE:
        raise GridTooLarge(f"{w}x{h} grid exceeds the dense cap of {MAX_DENSE} unknowns")
    if op == "gradient":
        return _basis_apply(gradient, h, w)
    if op == "laplacian":
        return _basis_apply(laplacian, h, w)
    if op == "T":
        return _basis_apply(lambda e: apply_T(e, L0, mu), h, w)
    if op in ("M_p", "M"):
        if spec is None:
            raise ValueError(f"{op} requires a preconditioner spec")
        if not unchecked:
            _check_feasible(spec, float(L0), float(mu), (h, w))
        zero = np.zeros((h, w))
        minv = _basis_apply(lambda e: _step(zero, e, spec, float(L0), float(mu)), h, w)
        Mp = np.linalg.inv(minv)
        if op == "M_p":
            return Mp
        T = assemble_dense("T", w, h, L0, mu)
        return Mp - T + L0 * np.eye(h * w)
    raise ValueError(f"unknown operator {op!r}")


def symmetric_min_eig(A, check=True, tol=1e-10):
    """Smallest eigenvalue of the symmetric part of ``A``.

    With ``check=True`` the relative asymmetry of ``A`` must not exceed
    ``tol``.
    """
    scale = max(1.0, float(np.max(np.abs(A))))
    if check and float(np.max(np.abs(A - A.T))) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def sgs_identity_dense(kind, w, h, L0, mu):
    """``T + E^* D^{-1} E`` from dense ``T`` for one symmetric sweep.

    ``E`` is minus the coupling of each unknown to those updated after it
    in the first half-sweep: lexicographic order for ``sgs_lex``, all red
    cells then all black cells for ``srbgs``.
    """
    T = assemble_dense("T", w, h, L0, mu)
    idx = np.arange(h * w)
    if kind == "srbgs":
        i, j = np.divmod(idx, w)
        order = np.concatenate([idx[(i + j) % 2 == 0], idx[(i + j) % 2 == 1]])
    elif kind == "sgs_lex":
        order = idx
    else:
        raise ValueError(f"{kind!r} is not a Gauss-Seidel kind")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    later = rank[None, :] > rank[:, None]  # column updated after row
    E = -np.where(later, T, 0.0)
    D = np.diag(np.diag(T))
    return T + E.T @ np.linalg.inv(D) @ E


@dataclass
class AuditReport:
    max_E_increase: float
    max_decrease_violation: float
    offending_t: List[int] = field(default_factory=list)
    passed: bool = True
    tol: float = 1e-9

    def as_text(self):
        status = "PASS" if self.passed else f"FAIL at t = {self.offending_t}"
        return (
            f"descent audit: max relative E increase {self.max_E_increase:.3e}, "
            f"max relative decrease violation {self.max_decrease_violation:.3e} "
            f"(tol {self.tol:g}) {status}"
        )


def audit_descent(trace, tol=1e-9):
    """Check E-monotonicity and the sufficient-decrease slack on every row.

    A row ``t`` violates if ``E_t - E_{t-1} > tol * (1 + |E_{t-1}|)`` or
    ``decrease_slack_t < -tol * (1 + |E_{t-1}|)``.  Reported magnitudes are
    relative to ``1 + |E_{t-1}|``; negative values mean no violation.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    inc = -math.inf
    viol = -math.inf
    bad = []
    for k in range(1, len(trace)):
        E_prev, E_cur = trace.E[k - 1], trace.E[k]
        if E_prev is None or E_cur is None:
            continue
        scale = 1.0 + abs(E_prev)
        rel_inc = (E_cur - E_prev) / scale
        inc = max(inc, rel_inc)
        slack = trace.decrease_slack[k]
        rel_viol = -slack / scale if slack is not None else -math.inf
        viol = max(viol, rel_viol)
        if rel_inc > tol or rel_viol > tol:
            bad.append(trace.t[k])
    if inc == -math.inf:
        inc = 0.0
    if viol == -math.inf:
        viol = 0.0
    return AuditReport(inc, viol, bad, not bad, tol)


@dataclass
class Summary:
    method: str
    iterations: int
    converged: bool
    wall_ms: float
    final_F: float
    final_psnr: Optional[float] = None
    eta: Optional[float] = None
    r_squared: Optional[float] = None

    FIELDS = ("method", "iterations", "converged", "wall_ms", "final_F", "final_psnr", "eta", "r_squared")

    def as_row(self):
        return ["" if getattr(self, f) is None else getattr(self, f) for f in self.FIELDS]

    def as_text(self):
        parts = [
            f"{self.method or 'run'}: {self.iterations} it",
            "converged" if self.converged else "not converged",
            f"{self.wall_ms:.1f} ms",
            f"F={self.final_F:.6g}",
        ]
        if self.final_psnr is not None:
            parts.append(f"PSNR={self.final_psnr:.3f} dB")
        if self.eta is not None:
            if math.isnan(self.r_squared):
                parts.append("rate: steps at numerical floor")
            else:
                parts.append(f"eta={self.eta:.4f} (r2={self.r_squared:.3f})")
        return ", ".join(parts)


def summarize_run(trace, tail_fraction=0.5):
    """Reduce a trace to one comparison row; rate fields stay empty when unfittable."""
    from .dca import fit_linear_rate

    if len(trace) == 0:
        raise ValueError("empty trace")
    eta = r2 = None
    try:
        fit = fit_linear_rate(trace, tail_fraction)
        eta, r2 = fit.eta, fit.r_squared
    except ValueError:
        pass
    return Summary(
        method=trace.method,
        iterations=trace.iterations,
        converged=trace.converged,
        wall_ms=trace.wall_ms[-1],
        final_F=trace.F[-1],
        final_psnr=trace.psnr[-1],
        eta=eta,
        r_squared=r2,
    )


def verify_suite(w=8, h=8, L0=1.0, mu=0.01, specs=None, seed=0, run_phantom=True):
    """Run the property checks behind ``tqreg verify``.

    Returns a list of ``(name, passed, detail)`` tuples.
    """
    from .dca import ExtrapolationSchedule, StopRule, run_dca
    from .grid import divergence, inner
    from .metrics import add_gaussian_noise, phantom
    from .model import ModelParams
    from .precond import PreconditionerSpec, check_feasibility, exact_solve, spec_label

    if w * h > MAX_DENSE:
        raise GridTooLarge(f"{w}x{h} grid exceeds the dense cap of {MAX_DENSE} unknowns")
    rng = np.random.default_rng(seed)
    results = []

    worst = 0.0
    for _ in range(100):
        u = rng.standard_normal((h, w))
        p = rng.standard_normal((2, h, w))
        lhs = inner(gradient(u), p)
        rhs = -inner(u, divergence(p))
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(p)))
    results.append(("adjoint <grad u, p> = -<u, div p>", worst <= 1e-12, f"max rel err {worst:.2e}"))

    G = assemble_dense("gradient", w, h)
    Lap = assemble_dense("laplacian", w, h)
    err = float(np.max(np.abs(G.T @ G + Lap)))
    results.append(("laplacian = div grad (dense)", err <= 1e-12, f"max abs err {err:.2e}"))

    b = rng.standard_normal((h, w))
    x = exact_solve(b, L0, mu)
    xd = np.linalg.solve(assemble_dense("T", w, h, L0, mu), b.ravel())
    rel = float(np.linalg.norm(x.ravel() - xd) / np.linalg.norm(xd))
    results.append(("DCT solve = dense solve", rel <= 1e-10, f"rel err {rel:.2e}"))

    if specs is None:
        specs = [
            PreconditionerSpec("srbgs", 1),
            PreconditionerSpec("srbgs", 3),
            PreconditionerSpec("srbgs", 10),
            PreconditionerSpec("sgs_lex", 1),
            PreconditionerSpec("richardson"),
            PreconditionerSpec("exact"),
        ]
    for spec in specs:
        rep = check_feasibility(spec, L0, mu, w, h)
        ok = rep.feasible and rep.min_eig_shift >= -1e-10
        results.append((f"feasibility {spec_label(spec)}", ok, rep.as_row()))
        if spec.kind in ("srbgs", "sgs_lex") and spec.sweeps == 1:
            Mp = assemble_dense("M_p", w, h, L0, mu, spec)
            ref = sgs_identity_dense(spec.kind, w, h, L0, mu)
            err = float(np.max(np.abs(Mp - ref)))
            results.append((f"M_p = T + E*D^-1 E ({spec.kind})", err <= 1e-12, f"max abs err {err:.2e}"))

    if run_phantom:
        truth = phantom(32)
        u0 = add_gaussian_noise(truth, 0.1, seed)
        params = ModelParams(lam=3.0, mu=0.01, variant="anisotropic")
        for spec in [s for s in specs if _is_feasible_quiet(s, params.L0, params.mu, u0.shape)]:
            _, tr = run_dca(
                u0, params, spec, ExtrapolationSchedule(), StopRule(1e-8, 300), monitor=False
            )
            rep = audit_descent(tr)
            results.append((f"descent audit {spec_label(spec)}", rep.passed, rep.as_text()))
    return results


def _is_feasible_quiet(spec, L0, mu, shape):
    from .precond import InfeasiblePreconditioner, _check_feasible

    try:
        _check_feasible(spec, L0, mu, shape)
    except InfeasiblePreconditioner:
        return False
    return True
