"""Core data model, filter recursion, simulation and forecasting.

The observation y_t is conditionally Poisson with intensity lambda_t. The
log intensity follows

    log lam_{t+1} = omega + beta*log lam_t + alpha_{t+1}*e_t
                    + gamma_{t+1}'x_t + psi'd_t

with scaled innovations e_t = (y_t - lam_t)/lam_t and score-driven
coefficient updates

    alpha_{t+1}   = delta_a + phi_a*alpha_t + kappa_a*e_t*e_{t-1}
    gamma_{j,t+1} = delta_gj + phi_gj*gamma_{j,t} + kappa_gj*e_t*x_{j,t}

All recursions clamp the log intensity to [LOG_LAMBDA_MIN, LOG_LAMBDA_MAX]
so bad parameter values can never produce a zero, infinite or NaN intensity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import LOG_LAMBDA_MAX, LOG_LAMBDA_MIN
from .errors import (
    DimensionMismatch,
    DomainError,
    NegativeCount,
    NonFiniteParameter,
    OverflowGuard,
)

LAMBDA_FLOOR = 1e-4


@dataclass(frozen=True)
class ModelSpec:
    """Model dimensions and which coefficient blocks are time-varying.

    A static block is represented by freezing its (phi, kappa) pair at zero,
    so the constant-coefficient model runs through the identical filter.
    """

    n_covariates: int = 0
    n_deterministics: int = 0
    alpha_time_varying: bool = True
    gamma_time_varying: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        if self.n_covariates < 0 or self.n_deterministics < 0:
            raise DimensionMismatch("model dimensions must be nonnegative")
        gtv = tuple(self.gamma_time_varying)
        if not gtv and self.n_covariates > 0:
            gtv = (True,) * self.n_covariates
        if len(gtv) != self.n_covariates:
            raise DimensionMismatch(
                f"gamma_time_varying has {len(gtv)} entries for "
                f"{self.n_covariates} covariates")
        object.__setattr__(self, "gamma_time_varying", gtv)


@dataclass
class ParamVector:
    """Static parameter vector theta.

    gamma_blocks holds one (delta, phi, kappa) triple per covariate, as an
    (m, 3) array. Frozen blocks simply carry zeros in the phi/kappa slots.
    """

    omega: float
    beta: float
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta_alpha: float = 0.0
    phi_alpha: float = 0.0
    kappa_alpha: float = 0.0
    gamma_blocks: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self) -> None:
        self.psi = np.atleast_1d(np.asarray(self.psi, dtype=np.float64))
        gb = np.asarray(self.gamma_blocks, dtype=np.float64)
        if gb.size == 0:
            gb = gb.reshape(0, 3)
        if gb.ndim != 2 or gb.shape[1] != 3:
            raise DimensionMismatch("gamma_blocks must be an (m, 3) array")
        self.gamma_blocks = gb

    @property
    def m(self) -> int:
        return self.gamma_blocks.shape[0]

    @property
    def d(self) -> int:
        return self.psi.shape[0]

    @property
    def delta_gamma(self) -> np.ndarray:
        return self.gamma_blocks[:, 0]

    @property
    def phi_gamma(self) -> np.ndarray:
        return self.gamma_blocks[:, 1]

    @property
    def kappa_gamma(self) -> np.ndarray:
        return self.gamma_blocks[:, 2]

    def scalars(self) -> tuple[float, float, float, float, float]:
        return (float(self.omega), float(self.beta), float(self.delta_alpha),
                float(self.phi_alpha), float(self.kappa_alpha))

    def copy(self) -> "ParamVector":
        return ParamVector(self.omega, self.beta, self.psi.copy(),
                           self.delta_alpha, self.phi_alpha, self.kappa_alpha,
                           self.gamma_blocks.copy())


def validate_params(theta: ParamVector, spec: ModelSpec | None = None) -> None:
    """Raise NonFiniteParameter / DimensionMismatch on an unusable theta."""
    values = np.concatenate([
        np.array([theta.omega, theta.beta, theta.delta_alpha,
                  theta.phi_alpha, theta.kappa_alpha], dtype=np.float64),
        theta.psi, theta.gamma_blocks.ravel()])
    if not np.all(np.isfinite(values)):
        raise NonFiniteParameter("parameter vector contains NaN or inf")
    if spec is not None:
        if theta.m != spec.n_covariates:
            raise DimensionMismatch(
                f"theta has {theta.m} gamma blocks, spec declares "
                f"{spec.n_covariates} covariates")
        if theta.d != spec.n_deterministics:
            raise DimensionMismatch(
                f"theta has {theta.d} psi entries, spec declares "
                f"{spec.n_deterministics} deterministics")


@dataclass
class SeriesData:
    """Observed counts with aligned covariate and deterministic matrices."""

    y: np.ndarray
    x: np.ndarray | None = None
    dmat: np.ndarray | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.y)
        if y.ndim != 1 or y.shape[0] < 1:
            raise DimensionMismatch("y must be a nonempty 1-d array")
        if not np.all(np.isfinite(y.astype(np.float64))):
            raise NonFiniteParameter("y contains NaN or inf")
        if np.any(y < 0):
            raise NegativeCount("y contains negative counts")
        if np.any(y != np.floor(y)):
            raise DomainError("y must contain integers")
        self.y = y.astype(np.int64)
        T = self.y.shape[0]
        for name in ("x", "dmat"):
            mat = getattr(self, name)
            if mat is None:
                mat = np.zeros((T, 0))
            mat = np.asarray(mat, dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] != T:
                raise DimensionMismatch(
                    f"{name} must have shape (T, *) with T={T}")
            if not np.all(np.isfinite(mat)):
                raise NonFiniteParameter(f"{name} contains NaN or inf")
            setattr(self, name, mat)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.dmat.shape[1]


@dataclass
class FilterInit:
    """Starting values for the recursion at t=1."""

    lambda1: float
    alpha1: float = 0.0
    gamma1: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        self.gamma1 = np.atleast_1d(np.asarray(self.gamma1, dtype=np.float64))
        vals = np.concatenate([np.array([self.lambda1, self.alpha1]),
                               self.gamma1])
        if not np.all(np.isfinite(vals)):
            raise DomainError("filter init contains NaN or inf")
        if self.lambda1 <= 0:
            raise DomainError("lambda1 must be positive")


@dataclass
class FilterPath:
    """Per-period output of the filter recursion."""

    lam: np.ndarray
    log_lambda: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    innov: np.ndarray
    loglik_terms: np.ndarray

    @property
    def T(self) -> int:
        return self.lam.shape[0]


@dataclass
class ForecastResult:
    """Point forecasts and empirical predictive quantiles of y."""

    mean: np.ndarray
    q05: np.ndarray
    q50: np.ndarray
    q95: np.ndarray
    horizon: int
    n_paths: int
    seed: int


def default_init(data: SeriesData, theta: ParamVector) -> FilterInit:
    """Sample-mean intensity start, unconditional means for the coefficients."""
    lambda1 = max(float(np.mean(data.y)), LAMBDA_FLOOR)
    alpha1 = theta.delta_alpha / (1.0 - theta.phi_alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma1 = theta.delta_gamma / (1.0 - theta.phi_gamma)
    gamma1 = np.where(np.isfinite(gamma1), gamma1, 0.0)
    if not np.isfinite(alpha1):
        alpha1 = 0.0
    return FilterInit(lambda1, alpha1, gamma1)


def steady_state_init(theta: ParamVector) -> FilterInit:
    """Deterministic steady state, for simulation where no data exists yet."""
    if not 0.0 < theta.beta < 1.0:
        raise DomainError("steady-state init needs 0 < beta < 1")
    if abs(theta.phi_alpha) >= 1.0 or np.any(np.abs(theta.phi_gamma) >= 1.0):
        raise DomainError("steady-state init needs |phi| < 1")
    loglam = theta.omega / (1.0 - theta.beta)
    loglam = min(max(loglam, LOG_LAMBDA_MIN), LOG_LAMBDA_MAX)
    return FilterInit(float(np.exp(loglam)),
                      theta.delta_alpha / (1.0 - theta.phi_alpha),
                      theta.delta_gamma / (1.0 - theta.phi_gamma))


def _kernel_args(theta: ParamVector):
    omega, beta, d_a, p_a, k_a = theta.scalars()
    return (omega, beta, theta.psi, d_a, p_a, k_a,
            np.ascontiguousarray(theta.delta_gamma),
            np.ascontiguousarray(theta.phi_gamma),
            np.ascontiguousarray(theta.kappa_gamma))


def _check_dims(theta: ParamVector, x: np.ndarray, dmat: np.ndarray) -> None:
    if x.shape[1] != theta.m:
        raise DimensionMismatch(
            f"x has {x.shape[1]} columns, theta has {theta.m} gamma blocks")
    if dmat.shape[1] != theta.d:
        raise DimensionMismatch(
            f"dmat has {dmat.shape[1]} columns, theta has {theta.d} psi entries")


def filter(data: SeriesData, theta: ParamVector,
           init: FilterInit | None = None) -> FilterPath:
    """Run the deterministic filter recursion along observed data.

    Pure function: identical inputs give bit-identical output.
    """
    validate_params(theta)
    _check_dims(theta, data.x, data.dmat)
    if init is None:
        init = default_init(data, theta)
    if init.gamma1.shape[0] != theta.m:
        raise DimensionMismatch("init gamma1 length disagrees with theta")
    yf = data.y.astype(np.float64)
    loglam, lam, alpha, gamma, innov, llterms = _kernels.filter_kernel(
        yf, data.x, data.dmat, *_kernel_args(theta),
        float(np.log(init.lambda1)), float(init.alpha1), init.gamma1)
    return FilterPath(lam, loglam, alpha, gamma, innov, llterms)


def simulate(theta: ParamVector, T: int, x: np.ndarray | None = None,
             dmat: np.ndarray | None = None, init: FilterInit | None = None,
             seed: int = 0,
             max_clamp_frac: float = 0.05) -> tuple[SeriesData, FilterPath]:
    """Draw y_t ~ Poisson(lam_t) sequentially, advancing the same recursion.

    Returns the draws together with the true latent path. Raises
    OverflowGuard when the upper intensity clamp fires on more than
    max_clamp_frac of the transitions (an explosive parameterization).
    """
    validate_params(theta)
    if T < 3:
        raise DomainError("simulate needs T >= 3")
    x = np.zeros((T, theta.m)) if x is None else np.asarray(x, dtype=np.float64)
    dmat = (np.zeros((T, theta.d)) if dmat is None
            else np.asarray(dmat, dtype=np.float64))
    if x.shape != (T, theta.m):
        raise DimensionMismatch(f"x must have shape ({T}, {theta.m})")
    if dmat.shape != (T, theta.d):
        raise DimensionMismatch(f"dmat must have shape ({T}, {theta.d})")
    if init is None:
        init = steady_state_init(theta)
    if init.gamma1.shape[0] != theta.m:
        raise DimensionMismatch("init gamma1 length disagrees with theta")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    y, loglam, lam, alpha, gamma, innov, llterms, hits = \
        _kernels.simulate_kernel(rng, T, x, dmat, *_kernel_args(theta),
                                 float(np.log(init.lambda1)),
                                 float(init.alpha1), init.gamma1)
    frac = hits / max(T - 1, 1)
    if frac > max_clamp_frac:
        raise OverflowGuard(
            f"upper intensity clamp hit on {frac:.1%} of transitions "
            f"(limit {max_clamp_frac:.1%})")
    data = SeriesData(y.astype(np.int64), x, dmat)
    path = FilterPath(lam, loglam, alpha, gamma, innov, llterms)
    return data, path


def forecast(path: FilterPath, data: SeriesData, theta: ParamVector,
             horizon: int, n_paths: int = 10000, seed: int = 0,
             future_x: np.ndarray | None = None,
             future_d: np.ndarray | None = None) -> ForecastResult:
    """Forecast y beyond the sample.

    The one-step intensity is measurable at time T and computed exactly;
    longer horizons continue the recursion by Monte Carlo. The point
    forecast is the path-average of the intensity (the conditional mean of
    y); quantiles are empirical 5/50/95% quantiles of the drawn counts.
    """
    validate_params(theta)
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    if path.T != data.T:
        raise DimensionMismatch("path and data lengths disagree")
    m, d = theta.m, theta.d
    future_x = (np.zeros((horizon, m)) if future_x is None and m == 0
                else future_x)
    future_d = (np.zeros((horizon, d)) if future_d is None and d == 0
                else future_d)
    if future_x is None or np.asarray(future_x).shape != (horizon, m):
        raise DimensionMismatch(f"future_x must have shape ({horizon}, {m})")
    if future_d is None or np.asarray(future_d).shape != (horizon, d):
        raise DimensionMismatch(f"future_d must have shape ({horizon}, {d})")
    future_x = np.asarray(future_x, dtype=np.float64)
    future_d = np.asarray(future_d, dtype=np.float64)

    T = data.T
    e_T = float(path.innov[-1])
    e_Tm1 = float(path.innov[-2]) if T >= 2 else 0.0
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    lam_mean, y_draws = _kernels.forecast_kernel(
        rng, int(n_paths), int(horizon), float(path.log_lambda[-1]),
        float(path.alpha[-1]), np.ascontiguousarray(path.gamma[-1]),
        e_T, e_Tm1, np.ascontiguousarray(data.x[-1]),
        np.ascontiguousarray(data.dmat[-1]), future_x, future_d,
        *_kernel_args(theta))
    qs = np.quantile(y_draws, [0.05, 0.5, 0.95], axis=0,
                     method="inverted_cdf")
    return ForecastResult(lam_mean, qs[0].astype(np.float64),
                          qs[1].astype(np.float64), qs[2].astype(np.float64),
                          horizon, n_paths, seed)
