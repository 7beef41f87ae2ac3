"""Command-line interface: ``tqreg {denoise,segment,compare,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage or input error,
3 numerical divergence.

Parameters come from three layers, later ones winning: built-in defaults,
a ``--config`` file of ``key = value`` lines (``#`` starts a comment; keys
are option names without the leading dashes) and command-line flags.
"""

import argparse
import concurrent.futures
import csv
import os
import sys
import time

from .dca import DescentViolation, DivergenceError, ExtrapolationSchedule, StopRule, run_dca
from .diagnostics import GridTooLarge, summarize_run, verify_suite
from .grid import DimensionError
from .imageio import ImageFormatError, read_image, write_image
from .metrics import add_gaussian_noise, ssim
from .model import ModelParams
from .precond import KINDS, InfeasiblePreconditioner, PreconditionerSpec, warmup
from .tv import TvParams, run_tv

__all__ = ["main", "build_parser", "load_config", "COMPARE_COLUMNS"]

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

COMPARE_COLUMNS = ("method", "iter", "wall_ms", "F_or_primal_energy", "psnr", "ssim")

DEFAULT_METHODS = "atq-srbgs,atq-exact,tv-aniso"


class UsageError(Exception):
    """Bad arguments or unreadable input (exit 2)."""


def _err(msg):
    print(f"tqreg: error: {msg}", file=sys.stderr)


# -- configuration -------------------------------------------------------


def load_config(path):
    """Parse a ``key = value`` file into a dict of strings.

    Keys are normalized to argparse destinations (``max-iter`` and
    ``max_iter`` are the same key).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _apply_config(parser, args, cfg, path):
    """Install config values as parser defaults, converting them like flags do."""
    actions = {}
    for a in parser._actions:
        if a.dest in ("help", "config"):
            continue
        actions[a.dest] = a
        for opt in a.option_strings:
            if opt.startswith("--"):
                actions[opt[2:].replace("-", "_")] = a
    defaults = {}
    for key, value in cfg.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"{path}: unknown key {key!r} for '{args.command}'")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            v = value.lower()
            if v not in _TRUE | _FALSE:
                raise UsageError(f"{path}: {key} expects a boolean, got {value!r}")
            defaults[action.dest] = v in _TRUE
            continue
        try:
            conv = action.type(value) if action.type else value
        except (TypeError, ValueError):
            raise UsageError(f"{path}: invalid value {value!r} for {key}") from None
        if action.choices is not None and conv not in action.choices:
            raise UsageError(f"{path}: {key} must be one of {list(action.choices)}, got {value!r}")
        defaults[action.dest] = conv
    parser.set_defaults(**defaults)


# -- parser --------------------------------------------------------------


def _add_model_args(p, lam=3.0, mu=0.01):
    g = p.add_argument_group("model")
    g.add_argument("--lambda", dest="lam", type=float, default=lam, help=f"truncation weight (default {lam:g})")
    g.add_argument("--mu", type=float, default=mu, help=f"quadratic weight (default {mu:g})")
    g.add_argument("--variant", default="aniso", choices=("aniso", "iso", "anisotropic", "isotropic", "atq", "itq"))
    g.add_argument("--L0", type=float, default=None, help="shift constant, >= 1 (default 1)")
    g = p.add_argument_group("solver")
    g.add_argument("--precond", default="srbgs", choices=KINDS)
    g.add_argument("--sweeps", type=int, default=10, help="Gauss-Seidel sweeps per iteration")
    g.add_argument("--c", type=float, default=None, help="Richardson constant (default L0 + mu*||grad||^2)")
    g.add_argument("--schedule", default="constant", choices=("constant", "nesterov_capped"))
    g.add_argument("--beta", type=float, default=0.3, help="constant extrapolation weight")
    g.add_argument("--beta-max", type=float, default=0.95, help="cap of the Nesterov schedule")
    g.add_argument("--tol", type=float, default=1e-5, help="relative step tolerance")
    g.add_argument("--max-iter", type=int, default=2000)
    g.add_argument("--no-monitor", action="store_true", help="do not abort on descent violations")


def _add_input_args(p):
    p.add_argument("--in", dest="input", required=True, help="input image (PGM, PPM or PNG)")
    p.add_argument("--truth", default=None, help="ground-truth image for PSNR/SSIM")
    p.add_argument("--sigma", type=float, default=0.0, help="std of added Gaussian noise on [0,1] scale")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--config", default=None, help="key = value parameter file")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tqreg", description="Truncated quadratic image denoising and segmentation."
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    for name, lam, mu, helptext in (
        ("denoise", 3.0, 0.01, "denoise an image"),
        ("segment", 300.0, 0.01, "segment an image (denoise with segmentation defaults)"),
    ):
        p = sub.add_parser(name, help=helptext, description=helptext)
        _add_input_args(p)
        p.add_argument("--out", default=None, help="output image (default <input stem>_<command><ext>)")
        p.add_argument("--trace", default="trace.csv", help="trace CSV path (default trace.csv)")
        p.add_argument("--noisy-out", default=None, help="also write the noisy input here")
        _add_model_args(p, lam, mu)

    p = sub.add_parser("compare", help="compare solvers on one noisy input")
    _add_input_args(p)
    p.add_argument("--methods", default=DEFAULT_METHODS,
                   help="comma list of {atq,itq}-{srbgs,sgs_lex,richardson,exact} and tv-{aniso,iso}")
    p.add_argument("--out", default="compare.csv", help="combined CSV (default compare.csv)")
    p.add_argument("--psnr", action="store_true", help="fill psnr/ssim columns (needs ground truth)")
    p.add_argument("--svg", default=None, help="write PSNR vs iteration / time chart (needs --psnr)")
    p.add_argument("--alpha", type=float, default=None, help="TV weight (default sigma, or 0.1)")
    p.add_argument("--tv-max-iter", type=int, default=1000)
    p.add_argument("--tv-tol", type=float, default=1e-6)
    p.add_argument("--jobs", type=int, default=1, help="concurrent runs (capped by TQREG_THREADS)")
    _add_model_args(p)

    p = sub.add_parser("verify", help="run the numerical property suite")
    p.add_argument("--grid", default="8x8", help="WxH of the dense checks (at most 4096 cells)")
    p.add_argument("--precond", default=None, choices=KINDS, help="check only this preconditioner")
    p.add_argument("--sweeps", type=int, default=None)
    p.add_argument("--c", type=float, default=None, help="Richardson constant to certify")
    p.add_argument("--L0", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-descent", action="store_true", help="skip the phantom descent audits")
    p.add_argument("--config", default=None)
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(subparser, args, cfg, args.config)
        args = parser.parse_args(argv)
    return args


# -- shared helpers ------------------------------------------------------


def _model(args):
    return ModelParams(args.lam, args.mu, args.variant, L0=args.L0)


def _precond(args, kind=None):
    return PreconditionerSpec(kind or args.precond, args.sweeps, args.c)


def _schedule(args):
    return ExtrapolationSchedule(args.schedule, args.beta, args.beta_max)


def _stop(args):
    if not args.tol > 0:
        raise ValueError(f"tol must be > 0, got {args.tol}")
    if args.max_iter < 1:
        raise ValueError(f"max-iter must be >= 1, got {args.max_iter}")
    return StopRule(args.tol, args.max_iter)


def _load_inputs(args):
    """Return ``(u0, truth)``; truth is the clean input when noise is added."""
    if args.sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {args.sigma}")
    clean = read_image(args.input)
    truth = None
    if args.truth is not None:
        truth = read_image(args.truth)
        if truth.shape != clean.shape:
            raise UsageError(f"truth {truth.shape} and input {clean.shape} differ in shape")
    if args.sigma > 0:
        u0 = add_gaussian_noise(clean, args.sigma, args.seed)
        if truth is None:
            truth = clean
    else:
        u0 = clean
    return u0, truth


def _default_out(path, command):
    stem, ext = os.path.splitext(os.path.basename(path))
    return f"{stem}_{command}{ext or '.png'}"


# -- commands ------------------------------------------------------------


def cmd_denoise(args):
    params = _model(args)
    spec = _precond(args)
    sched = _schedule(args)
    stop = _stop(args)
    u0, truth = _load_inputs(args)
    warmup()
    x, trace = run_dca(
        u0, params, spec, sched, stop, truth=truth, monitor=not args.no_monitor,
        method=f"{'atq' if params.variant == 'anisotropic' else 'itq'}-{spec.kind}",
    )
    out = args.out or _default_out(args.input, args.command)
    write_image(out, x)
    if args.noisy_out:
        write_image(args.noisy_out, u0)
    trace.to_csv(args.trace)
    summary = summarize_run(trace)
    line = summary.as_text()
    if truth is not None and min(x.shape[-2:]) >= 11:
        line += f", SSIM={ssim(x, truth):.4f}"
    print(line)
    print(f"wrote {out} and {args.trace}")
    return EXIT_OK


def _parse_methods(text):
    methods = []
    for m in (s.strip().lower() for s in text.split(",")):
        if not m:
            continue
        head, _, tail = m.partition("-")
        if head in ("atq", "itq") and tail.replace("-", "_") in KINDS:
            methods.append((m, head, tail.replace("-", "_")))
        elif head == "tv" and tail in ("aniso", "iso"):
            methods.append((m, head, tail))
        else:
            raise UsageError(f"unknown method {m!r}")
    if not methods:
        raise UsageError("no methods selected")
    if len({m[0] for m in methods}) != len(methods):
        raise UsageError("duplicate method in --methods")
    return methods


def _run_method(method, u0, truth, args, with_quality):
    name, head, tail = method
    ssims = []
    cb_ms = [0.0]
    offsets = []

    def callback(t, x):
        # SSIM bookkeeping is excluded from the reported wall time
        t0 = time.perf_counter()
        ssims.append(ssim(x, truth))
        cb_ms[0] += 1e3 * (time.perf_counter() - t0)
        offsets.append(cb_ms[0])

    cb = callback if with_quality else None
    quality_truth = truth if with_quality else None
    if head == "tv":
        alpha = args.alpha if args.alpha is not None else (args.sigma if args.sigma > 0 else 0.1)
        tvp = TvParams(alpha=alpha, variant=tail, max_iter=args.tv_max_iter, tol=args.tv_tol)
        _, trace = run_tv(u0, tvp, truth=quality_truth, callback=cb, method=name)
    else:
        params = ModelParams(args.lam, args.mu, head, L0=args.L0)
        _, trace = run_dca(
            u0, params, _precond(args, tail), _schedule(args), _stop(args),
            truth=quality_truth, callback=cb, monitor=not args.no_monitor, method=name,
        )
    rows = []
    for k in range(len(trace)):
        # callback k-1 ran before row k was timed
        shift = offsets[k - 2] if with_quality and k >= 2 else 0.0
        rows.append([
            name,
            trace.t[k],
            trace.wall_ms[k] - shift,
            trace.F[k],
            trace.psnr[k] if with_quality else None,
            (ssim(u0, truth) if k == 0 else ssims[k - 1]) if with_quality else None,
        ])
    return trace, rows


def _jobs(requested):
    cap = os.environ.get("TQREG_THREADS")
    n = max(1, requested)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def cmd_compare(args):
    methods = _parse_methods(args.methods)
    if args.svg and not args.psnr:
        raise UsageError("--svg charts PSNR and needs --psnr")
    # validate shared parameters before any run starts
    _model(args)
    _schedule(args)
    _stop(args)
    for _, head, tail in methods:
        if head != "tv":
            _precond(args, tail)
    u0, truth = _load_inputs(args)
    if args.psnr and truth is None:
        raise UsageError("--psnr needs ground truth: pass --truth or add noise with --sigma")
    if args.psnr and min(u0.shape[-2:]) < 11:
        raise UsageError("image is smaller than the 11x11 SSIM window")

    warmup()
    jobs = _jobs(args.jobs)
    if jobs == 1:
        results = [_run_method(m, u0, truth, args, args.psnr) for m in methods]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_method, m, u0, truth, args, args.psnr) for m in methods]
            results = [f.result() for f in futures]

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARE_COLUMNS)
        for _, rows in results:
            for r in rows:
                w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    for trace, _ in results:
        print(summarize_run(trace).as_text())
    if args.svg:
        by_iter = {m[0]: ([r[1] for r in rows], [r[4] for r in rows]) for m, (_, rows) in zip(methods, results)}
        by_time = {m[0]: ([r[2] for r in rows], [r[4] for r in rows]) for m, (_, rows) in zip(methods, results)}
        from .svgchart import write_charts

        write_charts(args.svg, [
            (by_iter, "PSNR vs iteration", "iteration", "PSNR (dB)"),
            (by_time, "PSNR vs time", "wall time (ms)", "PSNR (dB)"),
        ])
    print(f"wrote {args.out}" + (f" and {args.svg}" if args.svg else ""))
    return EXIT_OK


def _parse_grid(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--grid expects WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise UsageError(f"--grid dimensions must be positive, got {text!r}")
    return w, h


def cmd_verify(args):
    w, h = _parse_grid(args.grid)
    if not args.L0 > 0:
        raise UsageError(f"L0 must be > 0, got {args.L0}")
    if args.mu < 0:
        raise UsageError(f"mu must be >= 0, got {args.mu}")
    specs = None
    if args.precond is not None:
        sweeps = [args.sweeps] if args.sweeps is not None else ([1, 3, 10] if args.precond == "srbgs" else [1])
        specs = [PreconditionerSpec(args.precond, n, args.c) for n in sweeps]
        if args.precond in ("richardson", "exact"):
            specs = specs[:1]
    elif args.sweeps is not None or args.c is not None:
        specs = [
            PreconditionerSpec("srbgs", args.sweeps or 10),
            PreconditionerSpec("sgs_lex", args.sweeps or 1),
            PreconditionerSpec("richardson", c=args.c),
            PreconditionerSpec("exact"),
        ]
    results = verify_suite(w, h, args.L0, args.mu, specs, args.seed, run_phantom=not args.no_descent)
    width = max(len(name) for name, _, _ in results)
    print(f"{'property':<{width}}  result  detail")
    for name, ok, detail in results:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL':<6}  {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


_COMMANDS = {"denoise": cmd_denoise, "segment": cmd_denoise, "compare": cmd_compare, "verify": cmd_verify}


def main(argv=None):
    try:
        args = _parse(argv)
    except UsageError as exc:
        _err(exc)
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (DivergenceError, DescentViolation) as exc:
        _err(f"numerical divergence: {exc}")
        return EXIT_DIVERGED
    except GridTooLarge as exc:
        _err(exc)
        return EXIT_USAGE
    except (UsageError, ImageFormatError, DimensionError, InfeasiblePreconditioner, ValueError) as exc:
        _err(exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
