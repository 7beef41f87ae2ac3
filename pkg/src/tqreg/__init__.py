"""Truncated quadratic (weak-membrane) image regularization solved by a
preconditioned difference-of-convex algorithm with extrapolation."""

from .dca import (
    ConvergenceTrace,
    DcaState,
    DescentViolation,
    DivergenceError,
    ExtrapolationSchedule,
    RateFit,
    StopRule,
    fit_linear_rate,
    next_beta,
    run_dca,
    stationarity_residual,
)
from .diagnostics import GridTooLarge, assemble_dense, audit_descent, summarize_run
from .grid import DimensionError, apply_T, divergence, gradient, laplacian
from .imageio import ImageFormatError, read_image, write_image
from .metrics import add_gaussian_noise, phantom, psnr, ssim
from .model import (
    EnergyBreakdown,
    ForwardOp,
    ModelParams,
    auxiliary_E,
    dc_split_identity_check,
    energy,
    grad_f,
    subgradient_P2,
)
from .precond import (
    InfeasiblePreconditioner,
    MetricSpec,
    PreconditionerSpec,
    check_feasibility,
    exact_solve,
    inner_norm_M,
    precond_step,
    srbgs_sweep,
)
from .tv import TvParams, run_tv, tv_energy

__all__ = [
    "add_gaussian_noise",
    "apply_T",
    "assemble_dense",
    "audit_descent",
    "auxiliary_E",
    "check_feasibility",
    "ConvergenceTrace",
    "dc_split_identity_check",
    "DcaState",
    "DescentViolation",
    "DimensionError",
    "divergence",
    "DivergenceError",
    "energy",
    "EnergyBreakdown",
    "exact_solve",
    "ExtrapolationSchedule",
    "fit_linear_rate",
    "ForwardOp",
    "grad_f",
    "gradient",
    "GridTooLarge",
    "ImageFormatError",
    "InfeasiblePreconditioner",
    "inner_norm_M",
    "laplacian",
    "MetricSpec",
    "ModelParams",
    "next_beta",
    "phantom",
    "precond_step",
    "PreconditionerSpec",
    "psnr",
    "RateFit",
    "read_image",
    "run_dca",
    "run_tv",
    "srbgs_sweep",
    "ssim",
    "stationarity_residual",
    "StopRule",
    "subgradient_P2",
    "summarize_run",
    "tv_energy",
    "TvParams",
    "write_image",
]

__version__ = "0.1.0"
