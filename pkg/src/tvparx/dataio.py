"""CSV ingestion and JSON serialization.

CSV files are RFC-4180 with a required header, UTF-8. Column names carry
the roles: "y" holds the counts, "x:<name>" covariates, "d:<name>"
deterministic terms, and an optional "date" column is passed through as a
label. Parameter JSON uses the transliterated Greek names (omega, beta,
psi, delta_alpha, ...) so fitted values line up with published tables.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import (
    DimensionMismatch,
    NegativeCount,
    NonFiniteCovariate,
    ParseError,
)
from .estimation import FitResult
from .model import ParamVector, SeriesData


@dataclass
class CsvSchema:
    """Column layout of a loaded file, in header order."""

    x_names: tuple[str, ...]
    d_names: tuple[str, ...]
    has_date: bool
    has_y: bool


@dataclass
class LoadedSeries:
    data: SeriesData
    schema: CsvSchema
    dates: list[str] | None = None

    @property
    def x_names(self) -> tuple[str, ...]:
        return self.schema.x_names

    @property
    def d_names(self) -> tuple[str, ...]:
        return self.schema.d_names


def _read_rows(path: str | Path) -> list[list[str]]:
    p = Path(path)
    if not p.exists():
        raise ParseError(f"{p}: file not found")
    with open(p, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{p}: empty file (header required)")
    return rows


def _classify_header(header: list[str], require_y: bool) -> CsvSchema:
    x_names, d_names = [], []
    has_date = has_y = False
    for name in header:
        if name == "y":
            if has_y:
                raise ParseError("duplicate column 'y'")
            has_y = True
        elif name == "date":
            has_date = True
        elif name.startswith("x:") and len(name) > 2:
            x_names.append(name[2:])
        elif name.startswith("d:") and len(name) > 2:
            d_names.append(name[2:])
        else:
            raise ParseError(f"column {name!r} is not one of "
                             "y, date, x:<name>, d:<name>")
    if require_y and not has_y:
        raise ParseError("required column 'y' is missing")
    return CsvSchema(tuple(x_names), tuple(d_names), has_date, has_y)


def _parse_table(path: str | Path, require_y: bool) -> LoadedSeries | tuple:
    rows = _read_rows(path)
    header = rows[0]
    schema = _classify_header(header, require_y)
    n_cols = len(header)
    y_vals: list[int] = []
    x_vals: list[list[float]] = []
    d_vals: list[list[float]] = []
    dates: list[str] = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise ParseError(f"row {r}: expected {n_cols} fields, got {len(row)}")
        x_row, d_row = [], []
        for name, cell in zip(header, row):
            if name == "y":
                try:
                    v = int(cell)
                except ValueError:
                    raise ParseError(
                        f"row {r}, column 'y': {cell!r} is not an integer") from None
                if v < 0:
                    raise NegativeCount(f"row {r}: y = {v} is negative")
                y_vals.append(v)
            elif name == "date":
                dates.append(cell)
            else:
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(
                        f"row {r}, column {name!r}: {cell!r} is not a real "
                        "number") from None
                if not math.isfinite(v):
                    raise NonFiniteCovariate(
                        f"row {r}, column {name!r}: value {cell!r} is not finite")
                (x_row if name.startswith("x:") else d_row).append(v)
        x_vals.append(x_row)
        d_vals.append(d_row)
    if not x_vals:
        raise ParseError(f"{path}: no data rows")
    T = len(x_vals)
    x = np.asarray(x_vals, dtype=np.float64).reshape(T, len(schema.x_names))
    d = np.asarray(d_vals, dtype=np.float64).reshape(T, len(schema.d_names))
    return schema, y_vals, x, d, dates


def load_csv(path: str | Path) -> LoadedSeries:
    """Load a series file (y required) into SeriesData plus column names."""
    schema, y_vals, x, d, dates = _parse_table(path, require_y=True)
    data = SeriesData(np.asarray(y_vals, dtype=np.int64), x, d)
    return LoadedSeries(data, schema, dates if schema.has_date else None)


def load_covariates_csv(path: str | Path):
    """Load a covariate-only file (no y needed): (x, dmat, schema, dates)."""
    schema, _y, x, d, dates = _parse_table(path, require_y=False)
    return x, d, schema, (dates if schema.has_date else None)


# ---------------------------------------------------------------------------
# Parameter JSON

def params_to_dict(theta: ParamVector) -> dict:
    return {
        "omega": float(theta.omega),
        "beta": float(theta.beta),
        "psi": [float(v) for v in theta.psi],
        "delta_alpha": float(theta.delta_alpha),
        "phi_alpha": float(theta.phi_alpha),
        "kappa_alpha": float(theta.kappa_alpha),
        "delta_gamma": [float(v) for v in theta.delta_gamma],
        "phi_gamma": [float(v) for v in theta.phi_gamma],
        "kappa_gamma": [float(v) for v in theta.kappa_gamma],
    }


def params_from_dict(obj: dict) -> ParamVector:
    if "theta_hat" in obj:  # accept a full fit report
        obj = obj["theta_hat"]
    try:
        omega = float(obj["omega"])
        beta = float(obj["beta"])
    except KeyError as exc:
        raise ParseError(f"parameter JSON is missing key {exc}") from None
    psi = np.asarray(obj.get("psi", []), dtype=np.float64)
    dg = list(obj.get("delta_gamma", []))
    pg = list(obj.get("phi_gamma", []))
    kg = list(obj.get("kappa_gamma", []))
    if not len(dg) == len(pg) == len(kg):
        raise DimensionMismatch(
            "delta_gamma, phi_gamma, kappa_gamma must have equal lengths")
    gb = np.column_stack([dg, pg, kg]) if dg else np.zeros((0, 3))
    return ParamVector(omega, beta, psi,
                       float(obj.get("delta_alpha", 0.0)),
                       float(obj.get("phi_alpha", 0.0)),
                       float(obj.get("kappa_alpha", 0.0)), gb)


def load_params(path: str | Path) -> ParamVector:
    p = Path(path)
    if not p.exists():
        raise ParseError(f"{p}: file not found")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ParseError(f"{p}: expected a JSON object")
    return params_from_dict(obj)


# ---------------------------------------------------------------------------
# Fit report JSON

def _named_errors(names: tuple[str, ...], se: np.ndarray | None,
                  theta: ParamVector) -> dict | None:
    """Mirror the theta_hat structure; frozen parameters get null."""
    if se is None:
        return None
    by_name = dict(zip(names, se.tolist()))
    d = theta.psi.shape[0]
    m = theta.gamma_blocks.shape[0]
    return {
        "omega": by_name.get("omega"),
        "beta": by_name.get("beta"),
        "psi": [by_name.get(f"psi_{j + 1}") for j in range(d)],
        "delta_alpha": by_name.get("delta_alpha"),
        "phi_alpha": by_name.get("phi_alpha"),
        "kappa_alpha": by_name.get("kappa_alpha"),
        "delta_gamma": [by_name.get(f"delta_gamma_{j + 1}") for j in range(m)],
        "phi_gamma": [by_name.get(f"phi_gamma_{j + 1}") for j in range(m)],
        "kappa_gamma": [by_name.get(f"kappa_gamma_{j + 1}") for j in range(m)],
    }


def fit_report(result: FitResult, data: SeriesData,
               x_names: tuple[str, ...] = (), d_names: tuple[str, ...] = (),
               seed: int | None = None, include_path: bool = False) -> dict:
    """Serializable fit summary; round-trips exactly through JSON."""
    resid = data.y.astype(np.float64) - result.path.lam
    rmse = float(np.sqrt(np.mean(resid * resid)))
    report = {
        "version": __version__,
        "seed": seed,
        "model": {
            "n_covariates": result.spec.n_covariates,
            "n_deterministics": result.spec.n_deterministics,
            "alpha_time_varying": result.spec.alpha_time_varying,
            "gamma_time_varying": list(result.spec.gamma_time_varying),
            "x_names": list(x_names),
            "d_names": list(d_names),
        },
        "T": result.T,
        "k": result.k,
        "theta_hat": params_to_dict(result.theta_hat),
        "std_errors": {
            "hessian": _named_errors(result.param_names,
                                     None if result.vcov_hessian is None
                                     else result.std_errors,
                                     result.theta_hat),
            "sandwich": _named_errors(result.param_names,
                                      result.std_errors_sandwich,
                                      result.theta_hat),
        },
        "loglik": result.loglik,
        "criteria": {"aic": result.criteria.aic, "hqc": result.criteria.hqc,
                     "bic": result.criteria.bic},
        "rmse_in_sample": rmse,
        "convergence": {
            "converged": result.convergence.converged,
            "iterations": result.convergence.iterations,
            "grad_norm": result.convergence.grad_norm,
            "best_start": result.convergence.best_start,
            "used_fallback": result.convergence.used_fallback,
            "degenerate_data": result.convergence.degenerate_data,
            "n_starts": result.convergence.n_starts,
        },
        "diagnostics": {
            "stationarity": {
                "alpha_bar": result.stationarity.alpha_bar,
                "cond_phi": result.stationarity.cond_phi,
                "cond_beta": result.stationarity.cond_beta,
                "cond_product": result.stationarity.cond_product,
                "gamma_conds": list(result.stationarity.gamma_conds),
                "all_satisfied": result.stationarity.all_satisfied,
            },
            "invertibility": None if result.invertibility is None else {
                "ell": result.invertibility.ell,
                "empirical_log_contraction":
                    result.invertibility.empirical_log_contraction,
                "satisfied_empirically":
                    result.invertibility.satisfied_empirically,
            },
            "singular_information": result.singular_information,
        },
    }
    if include_path:
        report["path"] = {
            "lambda": result.path.lam.tolist(),
            "log_lambda": result.path.log_lambda.tolist(),
            "alpha": result.path.alpha.tolist(),
            "gamma": result.path.gamma.tolist(),
            "innov": result.path.innov.tolist(),
            "loglik_terms": result.path.loglik_terms.tolist(),
        }
    return report


def dump_json(obj: dict) -> str:
    """Stable-key-order JSON; floats keep full round-trip precision."""
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def write_json(path: str | Path, obj: dict) -> None:
    Path(path).write_text(dump_json(obj), encoding="utf-8")
