"""Command-line surface.

Five subcommands: simulate, fit, filter, forecast, mc. Exit codes are a
stable contract: 0 success, 2 usage error, 3 estimation did not converge,
4 data error. Errors print a single machine-parsable line on stderr,
prefixed "error: usage:" or "error: data:".
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataio, model, montecarlo
from ._version import __version__
from .errors import TvparxError
from .estimation import FitOptions, fit
from .model import FilterInit, ModelSpec, ParamVector


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _fmt(v: float) -> str:
    """Full-precision float text; round-trips exactly under float()."""
    return repr(float(v))


def _threads_for(args: argparse.Namespace) -> int:
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise _UsageError("--threads must be >= 1")
        return args.threads
    env = os.environ.get("TVPARX_THREADS", "").strip()
    if not env:
        return 1
    try:
        v = int(env)
    except ValueError:
        raise _UsageError(f"TVPARX_THREADS={env!r} is not an integer") from None
    if v < 1:
        raise _UsageError("TVPARX_THREADS must be >= 1")
    return v


def _parse_list(text: str, kind, flag: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(kind(tok))
        except ValueError:
            raise _UsageError(f"{flag}: {tok!r} is not a number") from None
    if not out:
        raise _UsageError(f"{flag} must list at least one value")
    return out


def _unconditional_init(theta: ParamVector, lambda1: float) -> FilterInit:
    alpha1 = (theta.delta_alpha / (1.0 - theta.phi_alpha)
              if abs(theta.phi_alpha) < 1.0 else 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma1 = theta.delta_gamma / (1.0 - theta.phi_gamma)
    gamma1 = np.where(np.isfinite(gamma1), gamma1, 0.0)
    return FilterInit(lambda1, alpha1, gamma1)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_simulate(args: argparse.Namespace) -> int:
    theta = dataio.load_params(args.params)
    x = dmat = None
    x_names: tuple[str, ...] = ()
    d_names: tuple[str, ...] = ()
    dates = None
    if args.covariates:
        x, dmat, schema, dates = dataio.load_covariates_csv(args.covariates)
        x_names, d_names = schema.x_names, schema.d_names
        T = x.shape[0]
        if args.T is not None and args.T != T:
            raise _UsageError(
                f"--T {args.T} disagrees with the {T} covariate rows")
    else:
        if theta.m > 0 or theta.d > 0:
            raise _UsageError(
                "parameters declare covariates/deterministics; "
                "supply --covariates")
        if args.T is None:
            raise _UsageError("simulate needs --T (or --covariates)")
        T = args.T
    init = (None if args.init_lambda is None
            else _unconditional_init(theta, args.init_lambda))
    data, path = model.simulate(theta, T, x, dmat, init=init, seed=args.seed)

    header = (["date"] if dates else []) + ["y"]
    header += [f"x:{n}" for n in x_names] + [f"d:{n}" for n in d_names]
    if args.with_latent:
        header += ["lambda", "log_lambda", "alpha"]
    lines = [",".join(header)]
    for t in range(T):
        row = ([dates[t]] if dates else []) + [str(int(data.y[t]))]
        row += [_fmt(v) for v in data.x[t]]
        row += [_fmt(v) for v in data.dmat[t]]
        if args.with_latent:
            row += [_fmt(path.lam[t]), _fmt(path.log_lambda[t]),
                    _fmt(path.alpha[t])]
        lines.append(",".join(row))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    loaded = dataio.load_csv(args.input)
    x_names, d_names = loaded.x_names, loaded.d_names
    m, d = len(x_names), len(d_names)
    frozen = {s.strip() for s in args.no_tv_gamma.split(",") if s.strip()}
    unknown = frozen - set(x_names)
    if unknown:
        raise _UsageError(
            f"--no-tv-gamma names {sorted(unknown)} are not covariate "
            f"columns (have {list(x_names)})")
    tv_alpha = args.model == "tv-parx"
    gamma_tv = tuple(tv_alpha and (n not in frozen) for n in x_names)
    spec = ModelSpec(m, d, alpha_time_varying=tv_alpha,
                     gamma_time_varying=gamma_tv)
    if args.starts < 1:
        raise _UsageError("--starts must be >= 1")
    opts = FitOptions(n_starts=args.starts, seed=args.seed,
                      covariance_kind=args.covariance,
                      threads=_threads_for(args))
    result = fit(loaded.data, spec, opts)
    report = dataio.fit_report(result, loaded.data, x_names, d_names,
                               seed=args.seed, include_path=args.with_path)
    dataio.write_json(args.out, report)
    if not result.convergence.converged:
        conv = result.convergence
        print(f"error: not-converged: grad_norm={conv.grad_norm:.3e} "
              f"after {conv.iterations} iterations", file=sys.stderr)
        return 3
    return 0


def _cmd_filter(args: argparse.Namespace) -> int:
    loaded = dataio.load_csv(args.input)
    theta = dataio.load_params(args.params)
    path = model.filter(loaded.data, theta)
    header = ["t"] + (["date"] if loaded.dates else []) + [
        "y", "lambda", "log_lambda", "alpha"]
    header += [f"gamma:{n}" for n in loaded.x_names]
    header += ["innov", "loglik_term"]
    lines = [",".join(header)]
    for t in range(path.T):
        row = [str(t + 1)]
        if loaded.dates:
            row.append(loaded.dates[t])
        row += [str(int(loaded.data.y[t])), _fmt(path.lam[t]),
                _fmt(path.log_lambda[t]), _fmt(path.alpha[t])]
        row += [_fmt(v) for v in path.gamma[t]]
        row += [_fmt(path.innov[t]), _fmt(path.loglik_terms[t])]
        lines.append(",".join(row))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _cmd_forecast(args: argparse.Namespace) -> int:
    loaded = dataio.load_csv(args.input)
    theta = dataio.load_params(args.params)
    if args.horizon < 1:
        raise _UsageError("--horizon must be >= 1")
    if args.paths < 1:
        raise _UsageError("--paths must be >= 1")
    future_x = future_d = None
    if args.future:
        future_x, future_d, fschema, _ = dataio.load_covariates_csv(args.future)
        if fschema.x_names != loaded.x_names or fschema.d_names != loaded.d_names:
            raise _UsageError(
                "--future columns must match the input columns "
                f"(expected x:{list(loaded.x_names)}, d:{list(loaded.d_names)})")
    elif theta.m > 0 or theta.d > 0:
        raise _UsageError(
            "--future is required when the model has covariates or "
            "deterministic terms")
    path = model.filter(loaded.data, theta)
    fc = model.forecast(path, loaded.data, theta, args.horizon,
                        n_paths=args.paths, seed=args.seed,
                        future_x=future_x, future_d=future_d)
    report = {
        "version": __version__,
        "seed": fc.seed,
        "horizon": fc.horizon,
        "n_paths": fc.n_paths,
        "mean": [float(v) for v in fc.mean],
        "q05": [float(v) for v in fc.q05],
        "q50": [float(v) for v in fc.q50],
        "q95": [float(v) for v in fc.q95],
    }
    dataio.write_json(args.out, report)
    return 0


def _cmd_mc(args: argparse.Namespace) -> int:
    deltas = _parse_list(args.delta_list, float, "--delta-list")
    gammas = _parse_list(args.gamma_list, float, "--gamma-list")
    sizes = _parse_list(args.T_list, int, "--T-list")
    if args.reps < 1:
        raise _UsageError("--reps must be >= 1")
    grid = montecarlo.default_grid(deltas, gammas, sizes)
    fit_options = montecarlo.default_fit_options()
    if args.starts is not None:
        if args.starts < 1:
            raise _UsageError("--starts must be >= 1")
        fit_options = replace(fit_options, n_starts=args.starts)
    result = montecarlo.run_table(
        grid, m=args.reps, base_seed=args.seed, threads=_threads_for(args),
        fit_options=fit_options, collect_bands=bool(args.bands_out))
    Path(args.out).write_text(result.to_csv_text(), encoding="utf-8")
    if args.json_out:
        dataio.write_json(args.json_out, result.to_json_dict())
    if args.bands_out:
        Path(args.bands_out).write_text(result.bands_csv_text(),
                                        encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tvparx",
                     description="Time-varying Poisson autoregression with "
                                 "covariates: simulate, fit, filter, "
                                 "forecast, Monte Carlo.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("simulate", help="draw a series at fixed parameters")
    p.add_argument("--params", required=True, help="parameter JSON file")
    p.add_argument("--T", type=int, default=None, help="series length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--covariates", default=None,
                   help="CSV with x:/d: columns driving the recursion")
    p.add_argument("--with-latent", action="store_true",
                   help="also write lambda, log_lambda, alpha columns")
    p.add_argument("--init-lambda", type=float, default=None,
                   help="override the steady-state starting intensity")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="estimate parameters by maximum likelihood")
    p.add_argument("--input", required=True, help="series CSV")
    p.add_argument("--model", required=True, choices=["tv-parx", "parx"])
    p.add_argument("--no-tv-gamma", default="", metavar="NAMES",
                   help="comma-separated covariate names whose gamma stays "
                        "constant")
    p.add_argument("--starts", type=int, default=8,
                   help="number of optimizer starts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="parallel starts (default $TVPARX_THREADS or 1)")
    p.add_argument("--covariance", default="both",
                   choices=["both", "hessian", "sandwich", "none"])
    p.add_argument("--with-path", action="store_true",
                   help="embed the filtered path in the report")
    p.add_argument("--out", required=True, help="output JSON report")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("filter", help="run the filter at fixed parameters")
    p.add_argument("--input", required=True, help="series CSV")
    p.add_argument("--params", required=True, help="parameter JSON file")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("forecast", help="forecast beyond the sample")
    p.add_argument("--input", required=True, help="series CSV")
    p.add_argument("--params", required=True, help="parameter JSON file")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--paths", type=int, default=10000,
                   help="Monte Carlo paths for horizons beyond one step")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--future", default=None,
                   help="CSV of future x:/d: rows, one per horizon step")
    p.add_argument("--out", required=True, help="output JSON")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("mc", help="step-intensity tracking experiment grid")
    p.add_argument("--delta-list", default="0,2,4", metavar="LIST")
    p.add_argument("--gamma-list", default="1,1.5,2", metavar="LIST")
    p.add_argument("--T-list", dest="T_list", default="250,500,1000",
                   metavar="LIST")
    p.add_argument("--reps", type=int, default=200,
                   help="replications per cell")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default $TVPARX_THREADS or 1)")
    p.add_argument("--starts", type=int, default=None,
                   help="optimizer starts per replication fit")
    p.add_argument("--out", required=True, help="summary CSV")
    p.add_argument("--json-out", default=None, help="optional JSON summary")
    p.add_argument("--bands-out", default=None,
                   help="optional CSV of pointwise intensity bands")
    p.set_defaults(func=_cmd_mc)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise _UsageError("a subcommand is required "
                              "(simulate, fit, filter, forecast, mc)")
        return args.func(args)
    except _UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except TvparxError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
