"""Quasi-maximum-likelihood estimation, covariance matrices, criteria.

The optimizer works in unconstrained coordinates (logit/tanh/exp transforms
keep beta in (0,1), the phis in (-1,1) and kappa_alpha positive), maximizing
the per-observation mean log-likelihood for scale-stable tolerances. The
reported loglik is the unnormalized sum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .diagnostics import (
    InvertibilityReport,
    StationarityReport,
    check_invertibility,
    check_stationarity,
)
from .errors import DimensionMismatch, DomainError
from .model import (
    FilterInit,
    FilterPath,
    ModelSpec,
    ParamVector,
    SeriesData,
    _kernel_args,
    default_init,
    filter as filter_series,
    validate_params,
)

EPS = float(np.finfo(np.float64).eps)
FD_STEP_DEFAULT = EPS ** (1.0 / 3.0)
# second differences lose ~eps/h^2 to roundoff; eps^(1/4) balances that
# against truncation, where the first-derivative step eps^(1/3) does not
FD_STEP_HESSIAN = EPS ** 0.25
KAPPA_ALPHA_FLOOR = 1e-8

# Clip ranges for the unconstrained coordinates. They keep the backward maps
# strictly interior in floating point: tanh(19) and logistic(36) are the
# largest arguments whose images stay below 1.0 in float64.
_U_TANH_MAX = 19.0
_U_LOGIT_MAX = 36.0
_U_LOG_MIN = math.log(KAPPA_ALPHA_FLOOR)
_U_LOG_MAX = 25.0

_IDENTITY, _LOGIT, _TANH, _LOG = "identity", "logit", "tanh", "log"


class Criteria(NamedTuple):
    aic: float
    hqc: float
    bic: float


@dataclass
class FitOptions:
    """Knobs for fit(). Defaults suit series of a few hundred observations."""

    n_starts: int = 8
    max_iter: int = 500
    grad_tol: float = 1e-5
    param_tol: float = 1e-9
    fd_step_rel: float = FD_STEP_DEFAULT
    seed: int = 0
    covariance_kind: str = "both"  # hessian | sandwich | both | none
    min_obs_per_param: int = 10
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n_starts < 1:
            raise DomainError("n_starts must be >= 1")
        if min(self.grad_tol, self.param_tol, self.fd_step_rel) <= 0:
            raise DomainError("tolerances must be positive")
        if self.covariance_kind not in ("hessian", "sandwich", "both", "none"):
            raise DomainError(f"unknown covariance_kind {self.covariance_kind!r}")


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    grad_norm: float
    best_start: int
    used_fallback: bool = False
    degenerate_data: bool = False
    n_starts: int = 1


@dataclass
class CovarianceResult:
    vcov_hessian: np.ndarray | None
    vcov_sandwich: np.ndarray | None
    info_eigenvalues: np.ndarray
    singular_information: bool


@dataclass
class FitResult:
    theta_hat: ParamVector
    loglik: float
    criteria: Criteria
    vcov_hessian: np.ndarray | None
    vcov_sandwich: np.ndarray | None
    std_errors: np.ndarray | None
    std_errors_sandwich: np.ndarray | None
    path: FilterPath
    convergence: ConvergenceReport
    stationarity: StationarityReport
    invertibility: InvertibilityReport | None
    spec: ModelSpec
    param_names: tuple[str, ...]
    singular_information: bool = False
    k: int = 0
    T: int = 0


@dataclass
class TransformMap:
    """Bijection between the free constrained parameters and R^k.

    The free-parameter layout is: omega, beta, psi_1..psi_d, delta_alpha,
    then (phi_alpha, kappa_alpha) when the alpha block is time-varying,
    then per covariate j: delta_gamma_j and, when time-varying,
    (phi_gamma_j, kappa_gamma_j). Frozen entries stay at zero.
    """

    spec: ModelSpec
    names: tuple[str, ...] = field(init=False)
    tags: tuple[str, ...] = field(init=False)

    def __post_init__(self) -> None:
        names: list[str] = ["omega", "beta"]
        tags: list[str] = [_IDENTITY, _LOGIT]
        for j in range(self.spec.n_deterministics):
            names.append(f"psi_{j + 1}")
            tags.append(_IDENTITY)
        names.append("delta_alpha")
        tags.append(_IDENTITY)
        if self.spec.alpha_time_varying:
            names += ["phi_alpha", "kappa_alpha"]
            tags += [_TANH, _LOG]
        for j in range(self.spec.n_covariates):
            names.append(f"delta_gamma_{j + 1}")
            tags.append(_IDENTITY)
            if self.spec.gamma_time_varying[j]:
                names += [f"phi_gamma_{j + 1}", f"kappa_gamma_{j + 1}"]
                tags += [_TANH, _IDENTITY]
        self.names = tuple(names)
        self.tags = tuple(tags)

    @property
    def k(self) -> int:
        return len(self.names)

    def pack(self, theta: ParamVector) -> np.ndarray:
        """Free parameters in natural (constrained) scale."""
        out = [theta.omega, theta.beta]
        out.extend(theta.psi.tolist())
        out.append(theta.delta_alpha)
        if self.spec.alpha_time_varying:
            out += [theta.phi_alpha, theta.kappa_alpha]
        for j in range(self.spec.n_covariates):
            out.append(theta.gamma_blocks[j, 0])
            if self.spec.gamma_time_varying[j]:
                out += [theta.gamma_blocks[j, 1], theta.gamma_blocks[j, 2]]
        return np.asarray(out, dtype=np.float64)

    def unpack(self, c: np.ndarray) -> ParamVector:
        c = np.asarray(c, dtype=np.float64)
        if c.shape != (self.k,):
            raise DimensionMismatch(f"expected {self.k} free parameters")
        spec = self.spec
        i = 0
        omega, beta = c[0], c[1]
        i = 2
        psi = c[i:i + spec.n_deterministics].copy()
        i += spec.n_deterministics
        delta_a = c[i]
        i += 1
        phi_a = kappa_a = 0.0
        if spec.alpha_time_varying:
            phi_a, kappa_a = c[i], c[i + 1]
            i += 2
        gb = np.zeros((spec.n_covariates, 3))
        for j in range(spec.n_covariates):
            gb[j, 0] = c[i]
            i += 1
            if spec.gamma_time_varying[j]:
                gb[j, 1], gb[j, 2] = c[i], c[i + 1]
                i += 2
        return ParamVector(float(omega), float(beta), psi, float(delta_a),
                           float(phi_a), float(kappa_a), gb)

    def to_unconstrained(self, theta: ParamVector) -> np.ndarray:
        c = self.pack(theta)
        u = np.empty_like(c)
        for i, tag in enumerate(self.tags):
            v = c[i]
            if tag == _IDENTITY:
                u[i] = v
            elif tag == _LOGIT:
                if not 0.0 < v < 1.0:
                    raise DomainError(f"{self.names[i]}={v} outside (0, 1)")
                u[i] = math.log(v / (1.0 - v))
            elif tag == _TANH:
                if not -1.0 < v < 1.0:
                    raise DomainError(f"{self.names[i]}={v} outside (-1, 1)")
                u[i] = math.atanh(v)
            else:  # _LOG
                if v <= 0.0:
                    raise DomainError(f"{self.names[i]}={v} must be positive")
                u[i] = math.log(max(v, KAPPA_ALPHA_FLOOR))
        return u

    def from_unconstrained(self, u: np.ndarray) -> ParamVector:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.k,):
            raise DimensionMismatch(f"expected {self.k} coordinates")
        c = np.empty_like(u)
        for i, tag in enumerate(self.tags):
            v = u[i]
            if tag == _IDENTITY:
                c[i] = v
            elif tag == _LOGIT:
                v = min(max(v, -_U_LOGIT_MAX), _U_LOGIT_MAX)
                c[i] = 1.0 / (1.0 + math.exp(-v))
            elif tag == _TANH:
                c[i] = math.tanh(min(max(v, -_U_TANH_MAX), _U_TANH_MAX))
            else:  # _LOG
                c[i] = math.exp(min(max(v, _U_LOG_MIN), _U_LOG_MAX))
        return self.unpack(c)


def transform_map(spec: ModelSpec) -> TransformMap:
    return TransformMap(spec)


def loglik(data: SeriesData, theta: ParamVector,
           init: FilterInit | None = None) -> float:
    """Unnormalized sum of y_t*log(lam_t) - lam_t along the filter path."""
    validate_params(theta)
    if init is None:
        init = default_init(data, theta)
    return float(_kernels.loglik_kernel(
        data.y.astype(np.float64), data.x, data.dmat, *_kernel_args(theta),
        float(np.log(init.lambda1)), float(init.alpha1), init.gamma1))


def information_criteria(loglik_value: float, k: int, T: int) -> Criteria:
    """AIC/HQC/BIC from the unnormalized log-likelihood."""
    if T < 2:
        raise DomainError("information criteria need T >= 2")
    if k < 0:
        raise DomainError("k must be nonnegative")
    return Criteria(
        -2.0 * loglik_value + 2.0 * k,
        -2.0 * loglik_value + 2.0 * k * math.log(math.log(T)),
        -2.0 * loglik_value + k * math.log(T))


def central_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                     step_rel: float = FD_STEP_DEFAULT) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step_rel * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def numeric_hessian(f: Callable[[np.ndarray], float], x: np.ndarray,
                    step_rel: float = FD_STEP_HESSIAN) -> np.ndarray:
    """Central-difference Hessian with per-coordinate step h_i = step_rel*max(1,|x_i|)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    h = step_rel * np.maximum(1.0, np.abs(x))
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        xp = x.copy(); xp[i] += h[i]
        xm = x.copy(); xm[i] -= h[i]
        H[i, i] = (f(xp) - 2.0 * f0 + f(xm)) / (h[i] * h[i])
    for i in range(n):
        for j in range(i + 1, n):
            xpp = x.copy(); xpp[i] += h[i]; xpp[j] += h[j]
            xpm = x.copy(); xpm[i] += h[i]; xpm[j] -= h[j]
            xmp = x.copy(); xmp[i] -= h[i]; xmp[j] += h[j]
            xmm = x.copy(); xmm[i] -= h[i]; xmm[j] -= h[j]
            H[i, j] = H[j, i] = ((f(xpp) - f(xpm) - f(xmp) + f(xmm))
                                 / (4.0 * h[i] * h[j]))
    return H


def numeric_jacobian(g: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                     step_rel: float = FD_STEP_DEFAULT) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued function, columns per x_i."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        h = step_rel * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        cols.append((g(xp) - g(xm)) / (2.0 * h))
    return np.column_stack(cols)


def _symmetric_inverse(M: np.ndarray, ridge_tol: float = 1e-10):
    """Eigen-inverse of a symmetric matrix; pseudo-inverse when near singular."""
    M = 0.5 * (M + M.T)
    eigvals, eigvecs = np.linalg.eigh(M)
    cutoff = ridge_tol * max(np.max(np.abs(eigvals)), 1e-300)
    singular = bool(np.min(eigvals) <= cutoff)
    inv_vals = np.where(eigvals > cutoff, 1.0 / np.where(eigvals > cutoff, eigvals, 1.0), 0.0)
    Minv = eigvecs @ np.diag(inv_vals) @ eigvecs.T
    return 0.5 * (Minv + Minv.T), eigvals, singular


def covariance(data: SeriesData, spec: ModelSpec, theta_hat: ParamVector,
               init: FilterInit | None = None, kind: str = "both",
               fd_step_rel: float = FD_STEP_DEFAULT) -> CovarianceResult:
    """Asymptotic covariance of the free parameters at theta_hat.

    J is the negative numerical Hessian of the mean log-likelihood in
    constrained coordinates; I is the outer product of per-period numerical
    score contributions. Returns J^-1/T and, for the sandwich,
    J^-1 I J^-1 / T, both symmetrized. Near-singular information is flagged
    and handled with a pseudo-inverse.
    """
    if kind not in ("hessian", "sandwich", "both"):
        raise DomainError(f"unknown covariance kind {kind!r}")
    tm = TransformMap(spec)
    T = data.T
    yf = data.y.astype(np.float64)

    def mean_ll(c: np.ndarray) -> float:
        theta = tm.unpack(c)
        ini = init if init is not None else default_init(data, theta)
        return _kernels.loglik_kernel(
            yf, data.x, data.dmat, *_kernel_args(theta),
            float(np.log(ini.lambda1)), float(ini.alpha1), ini.gamma1) / T

    c_hat = tm.pack(theta_hat)
    H = numeric_hessian(mean_ll, c_hat, fd_step_rel)
    J = 0.5 * ((-H) + (-H).T)
    Jinv, eigvals, singular = _symmetric_inverse(J)
    vcov_h = 0.5 * (Jinv / T + (Jinv / T).T)

    vcov_s = None
    if kind in ("sandwich", "both"):
        def ll_terms(c: np.ndarray) -> np.ndarray:
            theta = tm.unpack(c)
            ini = init if init is not None else default_init(data, theta)
            return _kernels.loglik_terms_kernel(
                yf, data.x, data.dmat, *_kernel_args(theta),
                float(np.log(ini.lambda1)), float(ini.alpha1), ini.gamma1)

        S = numeric_jacobian(ll_terms, c_hat, fd_step_rel)
        I_hat = (S.T @ S) / T
        vcov_s = Jinv @ I_hat @ Jinv / T
        vcov_s = 0.5 * (vcov_s + vcov_s.T)
    if kind == "sandwich":
        vcov_h = None
    return CovarianceResult(vcov_h, vcov_s, eigvals, singular)


def _start_point(data: SeriesData, tm: TransformMap) -> np.ndarray:
    """Moment-matched start in unconstrained coordinates."""
    beta0 = 0.9
    mean_y = max(float(np.mean(data.y)), 1e-4)
    c = np.zeros(tm.k)
    for i, name in enumerate(tm.names):
        if name == "omega":
            c[i] = (1.0 - beta0) * math.log(mean_y)
        elif name == "beta":
            c[i] = beta0
        elif name == "delta_alpha":
            c[i] = 0.05
        elif name == "kappa_alpha":
            c[i] = 0.05
        # phis, psis, gamma blocks start at zero
    return tm.to_unconstrained(tm.unpack(c))


def _run_one_start(objective, u0: np.ndarray, opts: FitOptions):
    res = minimize(objective, u0, method="BFGS", jac="3-point",
                   options={"gtol": opts.grad_tol, "maxiter": opts.max_iter,
                            "finite_diff_rel_step": opts.fd_step_rel})
    return float(res.fun), np.asarray(res.x), int(res.nit)


def fit(data: SeriesData, spec: ModelSpec,
        opts: FitOptions | None = None) -> FitResult:
    """Maximize the likelihood with seeded multi-start quasi-Newton search.

    Never raises on optimizer trouble: the best point found is returned with
    convergence.converged=False when the final gradient norm misses grad_tol
    (CLI maps that to exit code 3).
    """
    opts = opts if opts is not None else FitOptions()
    tm = TransformMap(spec)
    k = tm.k
    if data.m != spec.n_covariates or data.d != spec.n_deterministics:
        raise DimensionMismatch("data columns disagree with the model spec")
    if data.T < opts.min_obs_per_param * k:
        raise DomainError(
            f"T={data.T} is below the {opts.min_obs_per_param}*k={opts.min_obs_per_param * k} "
            f"sample-size guard")
    degenerate = not bool(np.any(data.y))
    yf = data.y.astype(np.float64)
    T = data.T

    def objective(u: np.ndarray) -> float:
        theta = tm.from_unconstrained(u)
        ini = default_init(data, theta)
        val = _kernels.loglik_kernel(
            yf, data.x, data.dmat, *_kernel_args(theta),
            float(np.log(ini.lambda1)), float(ini.alpha1), ini.gamma1) / T
        return -val if math.isfinite(val) else 1e12

    u0 = _start_point(data, tm)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(opts.seed)))
    starts = [u0]
    for _ in range(opts.n_starts - 1):
        starts.append(u0 + 0.25 * rng.standard_normal(k))

    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            runs = list(pool.map(lambda s: _run_one_start(objective, s, opts),
                                 starts))
    else:
        runs = [_run_one_start(objective, s, opts) for s in starts]

    best_idx = min(range(len(runs)), key=lambda i: (runs[i][0], i))
    best_fun, best_u, iters = runs[best_idx]
    total_iters = sum(r[2] for r in runs)

    grad = central_gradient(objective, best_u, opts.fd_step_rel)
    grad_norm = float(np.linalg.norm(grad))
    used_fallback = False
    if not (grad_norm < opts.grad_tol):
        # Simplex rescue for failed line searches, then a quasi-Newton polish.
        used_fallback = True
        res = minimize(objective, best_u, method="Nelder-Mead",
                       options={"maxiter": 400 * k, "xatol": opts.param_tol,
                                "fatol": 1e-13})
        cand = res.x if res.fun <= best_fun else best_u
        fun2, u2, it2 = _run_one_start(objective, cand, opts)
        total_iters += int(res.nit) + it2
        if fun2 <= best_fun:
            best_fun, best_u = fun2, u2
        grad = central_gradient(objective, best_u, opts.fd_step_rel)
        grad_norm = float(np.linalg.norm(grad))

    theta_hat = tm.from_unconstrained(best_u)
    init_hat = default_init(data, theta_hat)
    path = filter_series(data, theta_hat, init_hat)
    ll_sum = float(np.sum(path.loglik_terms))
    criteria = information_criteria(ll_sum, k, T)

    vcov_h = vcov_s = None
    se_h = se_s = None
    singular = False
    if opts.covariance_kind != "none":
        cov = covariance(data, spec, theta_hat, init=None,
                         kind=opts.covariance_kind,
                         fd_step_rel=opts.fd_step_rel)
        vcov_h, vcov_s = cov.vcov_hessian, cov.vcov_sandwich
        singular = cov.singular_information
        if vcov_h is not None:
            se_h = np.sqrt(np.maximum(np.diag(vcov_h), 0.0))
        if vcov_s is not None:
            se_s = np.sqrt(np.maximum(np.diag(vcov_s), 0.0))

    stationarity = check_stationarity(theta_hat)
    invertibility = None
    if (theta_hat.kappa_alpha > 0 and abs(theta_hat.phi_alpha) < 1
            and 0 < theta_hat.beta < 1 and data.T >= 2):
        invertibility = check_invertibility(theta_hat, data)

    convergence = ConvergenceReport(
        converged=bool(grad_norm < opts.grad_tol) and not degenerate,
        iterations=total_iters, grad_norm=grad_norm, best_start=best_idx,
        used_fallback=used_fallback, degenerate_data=degenerate,
        n_starts=opts.n_starts)
    return FitResult(
        theta_hat=theta_hat, loglik=ll_sum, criteria=criteria,
        vcov_hessian=vcov_h, vcov_sandwich=vcov_s,
        std_errors=se_h if se_h is not None else se_s,
        std_errors_sandwich=se_s, path=path, convergence=convergence,
        stationarity=stationarity, invertibility=invertibility, spec=spec,
        param_names=tm.names, singular_information=singular, k=k, T=T)
