"""Preconditioned DC algorithm with extrapolation for ITQ/ATQ models.

One iteration, starting from ``x^{-1} = x^0 = u0``::

    xi_t    = s=1 subgradient of P2 at x_t
    y_t     = x_t + beta_t (x_t - x_{t-1})
    b_t     = L0 y_t - grad f(y_t) + xi_t
    x_{t+1} = y_t + M_p^{-1} (b_t - T y_t),   T = L0 I - mu laplacian

which is the exact minimizer of the linearized subproblem with the proximal
metric ``M = M_p - (T - L0 I)``.  The driver records the auxiliary energy
``E(x_{t+1}, x_t) = F(x_{t+1}) + ||x_{t+1} - x_t||_M^2 / 2`` together with
the slack of the sufficient-decrease inequality

    E(x_t, x_{t-1}) - E(x_{t+1}, x_t) >= (1 - beta_t^2)/2 ||x_t - x_{t-1}||_M^2.
"""

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .grid import as_image, check_conformal, gradient, inner, laplacian
from .metrics import psnr as _psnr
from .model import grad_f, objective, subgradient_P2
from .precond import PreconditionerSpec, _check_feasible, _grad_sq, _step, residual

__all__ = [
    "DivergenceError",
    "DescentViolation",
    "ExtrapolationSchedule",
    "StopRule",
    "DcaState",
    "ConvergenceTrace",
    "RateFit",
    "run_dca",
    "stationarity_residual",
    "next_beta",
    "fit_linear_rate",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("t", "F", "E", "step_norm", "step_norm_M", "decrease_slack", "wall_ms", "psnr")

DESCENT_SLACK = 1e-9


class DivergenceError(ArithmeticError):
    """An iterate became non-finite (usually an infeasible metric)."""


class DescentViolation(ArithmeticError):
    """The auxiliary energy failed to decrease by the guaranteed amount."""


@dataclass(frozen=True)
class ExtrapolationSchedule:
    """Extrapolation weights ``beta_t`` in ``[0, 1)`` with ``sup beta_t < 1``.

    ``constant`` emits ``beta``.  ``nesterov_capped`` emits the FISTA
    ratio ``(theta_{t-1} - 1) / theta_t`` capped at ``beta_max``.
    """

    kind: str = "constant"
    beta: float = 0.3
    beta_max: float = 0.95

    def __post_init__(self):
        if self.kind not in ("constant", "nesterov_capped"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        for name in ("beta", "beta_max"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")

    def betas(self):
        if self.kind == "constant":
            while True:
                yield self.beta
        theta_prev = 1.0
        while True:
            theta = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta_prev * theta_prev))
            yield min(self.beta_max, (theta_prev - 1.0) / theta)
            theta_prev = theta


def next_beta(sched, t):
    """Extrapolation weight for iteration ``t`` (0-based)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if sched.kind == "constant":
        return sched.beta
    for k, beta in enumerate(sched.betas()):
        if k == t:
            return beta


@dataclass(frozen=True)
class StopRule:
    """Stop when ``||x_{t+1} - x_t|| / max(1, ||x_t||) <= tol`` or after ``max_iter``."""

    tol: float = 1e-5
    max_iter: int = 2000


@dataclass
class DcaState:
    x_curr: np.ndarray
    x_prev: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, x0):
        return cls(x0, x0, 0)


@dataclass
class ConvergenceTrace:
    """Per-iteration record; row ``t`` describes iterate ``x_t``.

    Row 0 is the starting point.  Quantities that do not apply to a row
    (or to a method) are ``None`` and serialize as empty CSV fields.
    """

    method: str = ""
    t: List[int] = field(default_factory=list)
    F: List[float] = field(default_factory=list)
    E: List[Optional[float]] = field(default_factory=list)
    step_norm: List[float] = field(default_factory=list)
    step_norm_M: List[Optional[float]] = field(default_factory=list)
    decrease_slack: List[Optional[float]] = field(default_factory=list)
    wall_ms: List[float] = field(default_factory=list)
    psnr: List[Optional[float]] = field(default_factory=list)
    beta: List[Optional[float]] = field(default_factory=list)
    converged: bool = False

    def append(self, t, F, E, step_norm, step_norm_M, decrease_slack, wall_ms, psnr=None, beta=None):
        self.t.append(t)
        self.F.append(F)
        self.E.append(E)
        self.step_norm.append(step_norm)
        self.step_norm_M.append(step_norm_M)
        self.decrease_slack.append(decrease_slack)
        self.wall_ms.append(wall_ms)
        self.psnr.append(psnr)
        self.beta.append(beta)

    def __len__(self):
        return len(self.t)

    @property
    def iterations(self):
        """Number of iterations performed (rows after the starting point)."""
        return max(0, len(self.t) - 1)

    def rows(self):
        for k in range(len(self.t)):
            yield tuple(getattr(self, c)[k] for c in TRACE_COLUMNS)

    def to_csv(self, path_or_buf=None):
        """Write ``t,F,E,step_norm,step_norm_M,decrease_slack,wall_ms,psnr``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in self.rows():
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_buf, method=""):
        if hasattr(path_or_buf, "read"):
            text = path_or_buf.read()
        else:
            with open(path_or_buf, newline="") as fh:
                text = fh.read()
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        tr = cls(method=method)
        for row in reader:
            vals = [None if v == "" else float(v) for v in row]
            vals[0] = int(vals[0])
            tr.append(*vals)
        return tr


def stationarity_residual(x, params, u0):
    """``||grad f(x) + grad P1(x) - xi(x)|| / sqrt(N)`` with the s=1 subgradient."""
    x = np.asarray(x, dtype=np.float64)
    g = gradient(x)
    res = grad_f(x, params, u0) - params.mu * laplacian(x) - subgradient_P2(x, params, g=g)
    return math.sqrt(inner(res, res) / x.size)


def run_dca(
    u0,
    params,
    precond=None,
    sched=None,
    stop=None,
    *,
    truth=None,
    x_init=None,
    monitor=True,
    callback=None,
    method="",
):
    """Minimize the ITQ/ATQ objective with the preconditioned DC iteration.

    Parameters
    ----------
    u0 : ndarray
        Observed image, shape (H, W) or (3, H, W).
    params : ModelParams
    precond : PreconditionerSpec, optional
        Defaults to 10 symmetric red-black Gauss-Seidel sweeps.
    sched : ExtrapolationSchedule, optional
        Defaults to constant ``beta = 0.3``.
    stop : StopRule, optional
    truth : ndarray, optional
        Ground truth; enables the PSNR column of the trace.
    x_init : ndarray, optional
        Starting point (default ``u0``).
    monitor : bool
        Raise `DescentViolation` as soon as the energy inequalities fail
        beyond ``1e-9 * (1 + |E|)``.
    callback : callable, optional
        Called as ``callback(t, x_t)`` after each iteration.

    Returns
    -------
    x : ndarray
        Final iterate if converged, otherwise the lowest-objective iterate.
    trace : ConvergenceTrace
    """
    start = time.perf_counter()
    u0 = as_image(u0, "u0")
    precond = precond or PreconditionerSpec()
    sched = sched or ExtrapolationSchedule()
    stop = stop or StopRule()
    L0, mu = params.L0, params.mu
    _check_feasible(precond, L0, mu, u0.shape)
    if truth is not None:
        truth = as_image(truth, "truth")
        check_conformal(u0, truth)
    x = u0.copy() if x_init is None else as_image(x_init, "x_init").copy()
    check_conformal(x, u0)

    kind = precond.kind
    c = precond.richardson_c(L0, mu, x.shape) if kind == "richardson" else None

    g = gradient(x)
    F_x = objective(x, params, u0, g=g)
    E_x = F_x
    nM2_prev = 0.0  # ||x_t - x_{t-1}||_M^2
    w = np.zeros_like(x)  # M_p (x_t - x_{t-1}), Gauss-Seidel kinds only
    state = DcaState.initial(x)
    trace = ConvergenceTrace(method=method)
    trace.append(
        0, F_x, E_x, 0.0, 0.0, None,
        1e3 * (time.perf_counter() - start),
        _psnr(x, truth) if truth is not None else None,
    )
    best_x, best_F = x, F_x
    betas = sched.betas()

    for t in range(stop.max_iter):
        x, x_prev = state.x_curr, state.x_prev
        xi = subgradient_P2(x, params, g=g)
        beta = next(betas)
        y = x + beta * (x - x_prev) if beta else x
        b = L0 * y - grad_f(y, params, u0) + xi
        if kind in ("srbgs", "sgs_lex"):
            r = residual(y, b, L0, mu)
        x_new = _step(y, b, precond, L0, mu)
        d = x_new - x
        dd = inner(d, d)
        g_new = gradient(x_new)
        if kind == "exact":
            nM2 = L0 * dd
        else:
            # <d, T d> = L0 ||d||^2 + mu ||grad d||^2
            dTd = L0 * dd + mu * _grad_sq(d)
            if kind == "richardson":
                nM2 = (c + L0) * dd - dTd
            else:
                # M_p (x_{t+1} - x_t) = (b - T y) + beta * M_p (x_t - x_{t-1})
                w = r + beta * w
                nM2 = inner(d, w) - dTd + L0 * dd

        F_new = objective(x_new, params, u0, g=g_new)
        if not (math.isfinite(F_new) and math.isfinite(nM2) and np.all(np.isfinite(x_new))):
            raise DivergenceError(f"non-finite iterate at t = {t + 1}")
        E_new = F_new + 0.5 * nM2
        slack = E_x - E_new - 0.5 * (1.0 - beta * beta) * nM2_prev
        if monitor:
            allow = DESCENT_SLACK * (1.0 + abs(E_x))
            if E_new > E_x + allow or slack < -allow:
                raise DescentViolation(
                    f"t = {t + 1}: E {E_x!r} -> {E_new!r}, decrease slack {slack!r}"
                )
        step = math.sqrt(dd)
        trace.append(
            t + 1, F_new, E_new, step, math.sqrt(max(nM2, 0.0)), slack,
            1e3 * (time.perf_counter() - start),
            _psnr(x_new, truth) if truth is not None else None,
            beta,
        )
        if callback is not None:
            callback(t + 1, x_new)
        if F_new < best_F:
            best_x, best_F = x_new, F_new

        x_norm = math.sqrt(inner(x, x))
        state = DcaState(x_new, x, t + 1)
        g, F_x, E_x, nM2_prev = g_new, F_new, E_new, nM2
        if step <= stop.tol * max(1.0, x_norm):
            trace.converged = True
            return x_new, trace

    return best_x, trace


class RateFit(NamedTuple):
    eta: float
    r_squared: float


def fit_linear_rate(trace, tail_fraction=0.5, floor_rel=1e-12, min_tail=20):
    """Fit ``step_norm_t ~ C * eta**t`` over the last ``tail_fraction`` of a trace.

    Returns ``RateFit(eta, r_squared)``.  When the steps have reached the
    numerical floor (a step at most ``floor_rel`` times the largest step,
    or no variation at all) there is no rate to measure and the flagged
    value ``RateFit(0.0, nan)`` is returned.

    Raises
    ------
    ValueError
        If the tail window holds fewer than ``min_tail`` iterations.
    """
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    t = np.asarray(trace.t[1:], dtype=np.float64)
    s = np.asarray(trace.step_norm[1:], dtype=np.float64)
    if s.size == 0:
        raise ValueError("trace has no iterations")
    floor = floor_rel * float(np.max(s))
    if float(np.max(s)) == 0.0 or s[-1] <= floor:
        return RateFit(0.0, float("nan"))
    n = int(math.ceil(tail_fraction * s.size))
    if n < min_tail:
        raise ValueError(f"tail window has {n} iterations, need at least {min_tail}")
    t, s = t[-n:], s[-n:]
    if np.any(s <= floor):
        return RateFit(0.0, float("nan"))
    ys = np.log(s)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    if ss_tot == 0.0:
        return RateFit(0.0, float("nan"))
    slope, intercept = np.polyfit(t, ys, 1)
    ss_res = float(np.sum((ys - (slope * t + intercept)) ** 2))
    return RateFit(float(np.exp(slope)), 1.0 - ss_res / ss_tot)
