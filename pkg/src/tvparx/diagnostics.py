"""Checkable analogues of the model's theoretical conditions.

These reports never abort anything: empirical fits legitimately sit near
the boundaries, so every check annotates rather than rejects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError
from .model import (
    FilterInit,
    ParamVector,
    SeriesData,
    simulate,
    steady_state_init,
    validate_params,
)


@dataclass
class StationarityReport:
    alpha_bar: float
    cond_phi: bool
    cond_beta: bool
    cond_product: bool
    gamma_conds: tuple[bool, ...]
    all_satisfied: bool


@dataclass
class InvertibilityReport:
    ell: float
    empirical_log_contraction: float
    satisfied_empirically: bool


@dataclass
class MomentReport:
    moments_y: tuple[float, ...]
    moments_log_lambda: tuple[float, ...]
    tail_index: float
    clamp_fraction: float
    clamp_warning: bool
    T: int
    seed: int


def check_stationarity(theta: ParamVector) -> StationarityReport:
    """Sufficient conditions for a stationary, ergodic intensity process."""
    validate_params(theta)
    if theta.phi_alpha == 1.0:
        raise DomainError("alpha_bar undefined at phi_alpha = 1")
    alpha_bar = theta.delta_alpha / (1.0 - theta.phi_alpha)
    cond_phi = abs(theta.phi_alpha) < 1.0
    cond_beta = 0.0 < theta.beta < 1.0
    cond_product = theta.beta * abs(theta.beta + alpha_bar) < 1.0
    gamma_conds = tuple(bool(abs(p) < 1.0) for p in theta.phi_gamma)
    return StationarityReport(
        alpha_bar=float(alpha_bar), cond_phi=cond_phi, cond_beta=cond_beta,
        cond_product=cond_product, gamma_conds=gamma_conds,
        all_satisfied=cond_phi and cond_beta and cond_product
        and all(gamma_conds))


def invertibility_bound(theta: ParamVector) -> float:
    """The lower intensity bound ell = (omega - (d_a+k_a)/(1-phi_a)) / (1-beta)."""
    if not 0.0 < theta.beta < 1.0 or abs(theta.phi_alpha) >= 1.0:
        raise DomainError("ell needs 0 < beta < 1 and |phi_alpha| < 1")
    return float((theta.omega
                  - (theta.delta_alpha + theta.kappa_alpha)
                  / (1.0 - theta.phi_alpha)) / (1.0 - theta.beta))


def check_invertibility(theta: ParamVector,
                        data: SeriesData) -> InvertibilityReport:
    """Empirical contraction diagnostic along the observed data.

    Averages the per-period log contraction factor of the filter map at the
    supplied theta; a negative mean indicates the filtered path forgets its
    initialization exponentially fast. Advisory: the theoretical condition
    involves a supremum this pointwise check cannot certify.
    """
    validate_params(theta)
    if theta.kappa_alpha <= 0:
        raise DomainError("invertibility diagnostic needs kappa_alpha > 0")
    if data.T < 2:
        raise DomainError("invertibility diagnostic needs T >= 2")
    ell = invertibility_bound(theta)
    mean_term = float(_kernels.invertibility_kernel(
        data.y.astype(np.float64), float(theta.omega), float(theta.beta),
        float(theta.delta_alpha), float(theta.phi_alpha),
        float(theta.kappa_alpha)))
    return InvertibilityReport(ell=ell, empirical_log_contraction=mean_term,
                               satisfied_empirically=mean_term < 0.0)


def _hill_tail_index(values: np.ndarray, top_frac: float = 0.05) -> float:
    """Hill estimator on the upper order statistics of values + 1."""
    v = np.sort(values.astype(np.float64) + 1.0)
    n_top = max(int(top_frac * v.size), 2)
    tail = v[-n_top:]
    return float(np.mean(np.log(tail / tail[0])))


def moment_sanity(theta: ParamVector, T: int, k: int = 4,
                  seed: int = 0) -> MomentReport:
    """Simulate T draws and report empirical moments and clamp saturation.

    Finiteness of the model's moments is a theorem, not a testable claim;
    this check only flags numerically explosive paths. Covariates are held
    at zero.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    try:
        init = steady_state_init(theta)
    except DomainError:
        init = FilterInit(1.0, theta.delta_alpha, np.zeros(theta.m))
    # max_clamp_frac=inf: the report measures saturation instead of raising.
    data, path = simulate(theta, T, init=init, seed=seed,
                          max_clamp_frac=math.inf)
    yf = data.y.astype(np.float64)
    moments_y = tuple(float(np.mean(yf ** i)) for i in range(1, k + 1))
    moments_ll = tuple(float(np.mean(path.log_lambda ** i))
                       for i in range(1, k + 1))
    clamp_frac = float(np.mean(path.log_lambda >= _kernels.LOG_LAMBDA_MAX))
    return MomentReport(
        moments_y=moments_y, moments_log_lambda=moments_ll,
        tail_index=_hill_tail_index(data.y), clamp_fraction=clamp_frac,
        clamp_warning=clamp_frac > 0.001, T=T, seed=seed)
