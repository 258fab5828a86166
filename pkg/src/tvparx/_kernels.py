"""Numba kernels for the sequential recursions.

Everything here is an implementation detail: the filter/simulate loops are
order-dependent and dominate runtime, so they are compiled. The same
`_advance` step is shared by filtering, simulation and forecasting, which
guarantees bit-identical arithmetic between them.
"""

import math

import numpy as np
from numba import njit

LOG_LAMBDA_MIN = -20.0
LOG_LAMBDA_MAX = 25.0


@njit(cache=True, nogil=True, inline="always")
def _clamp(z):
    if z > LOG_LAMBDA_MAX:
        return LOG_LAMBDA_MAX
    if z < LOG_LAMBDA_MIN:
        return LOG_LAMBDA_MIN
    return z


@njit(cache=True, nogil=True, inline="always")
def _advance(t, loglam, alpha, gamma, innov, x, dmat,
             omega, beta, psi, d_a, p_a, k_a, d_g, p_g, k_g):
    """Advance the state from index t to t+1 in place.

    Returns 1 when the proposed log-intensity exceeded LOG_LAMBDA_MAX
    (the explosive-side clamp), else 0. Uses innov[t] and innov[t-1]
    (zero before the sample starts) together with the time-t covariate
    rows, so the t+1 intensity is fully predictable at time t.
    """
    e_t = innov[t]
    e_prev = innov[t - 1] if t > 0 else 0.0
    a_next = d_a + p_a * alpha[t] + k_a * e_t * e_prev
    z = omega + beta * loglam[t] + a_next * e_t
    for j in range(gamma.shape[1]):
        g = d_g[j] + p_g[j] * gamma[t, j] + k_g[j] * e_t * x[t, j]
        gamma[t + 1, j] = g
        z += g * x[t, j]
    for j in range(dmat.shape[1]):
        z += psi[j] * dmat[t, j]
    hit = 1 if z > LOG_LAMBDA_MAX else 0
    alpha[t + 1] = a_next
    loglam[t + 1] = _clamp(z)
    return hit


@njit(cache=True, nogil=True)
def filter_kernel(y, x, dmat, omega, beta, psi, d_a, p_a, k_a, d_g, p_g, k_g,
                  loglam1, alpha1, gamma1):
    T = y.shape[0]
    m = x.shape[1]
    loglam = np.empty(T)
    lam = np.empty(T)
    alpha = np.empty(T)
    gamma = np.empty((T, m))
    innov = np.empty(T)
    llterms = np.empty(T)
    loglam[0] = _clamp(loglam1)
    alpha[0] = alpha1
    for j in range(m):
        gamma[0, j] = gamma1[j]
    for t in range(T):
        lam[t] = np.exp(loglam[t])
        innov[t] = (y[t] - lam[t]) / lam[t]
        llterms[t] = y[t] * loglam[t] - lam[t]
        if t + 1 < T:
            _advance(t, loglam, alpha, gamma, innov, x, dmat,
                     omega, beta, psi, d_a, p_a, k_a, d_g, p_g, k_g)
    return loglam, lam, alpha, gamma, innov, llterms


@njit(cache=True, nogil=True)
def loglik_kernel(y, x, dmat, omega, beta, psi, d_a, p_a, k_a, d_g, p_g, k_g,
                  loglam1, alpha1, gamma1):
    """Sum of y_t*log(lam_t) - lam_t along the same recursion, no path output."""
    T = y.shape[0]
    m = x.shape[1]
    loglam = np.empty(T)
    alpha = np.empty(T)
    gamma = np.empty((T, m))
    innov = np.empty(T)
    loglam[0] = _clamp(loglam1)
    alpha[0] = alpha1
    for j in range(m):
        gamma[0, j] = gamma1[j]
    total = 0.0
    for t in range(T):
        lam_t = np.exp(loglam[t])
        innov[t] = (y[t] - lam_t) / lam_t
        total += y[t] * loglam[t] - lam_t
        if t + 1 < T:
            _advance(t, loglam, alpha, gamma, innov, x, dmat,
                     omega, beta, psi, d_a, p_a, k_a, d_g, p_g, k_g)
    return total


@njit(cache=True, nogil=True)
def loglik_terms_kernel(y, x, dmat, omega, beta, psi, d_a, p_a, k_a,
                        d_g, p_g, k_g, loglam1, alpha1, gamma1):
    """Per-period contributions y_t*log(lam_t) - lam_t (for OPG scores)."""
    T = y.shape[0]
    m = x.shape[1]
    loglam = np.empty(T)
    alpha = np.empty(T)
    gamma = np.empty((T, m))
    innov = np.empty(T)
    out = np.empty(T)
    loglam[0] = _clamp(loglam1)
    alpha[0] = alpha1
    for j in range(m):
        gamma[0, j] = gamma1[j]
    for t in range(T):
        lam_t = np.exp(loglam[t])
        innov[t] = (y[t] - lam_t) / lam_t
        out[t] = y[t] * loglam[t] - lam_t
        if t + 1 < T:
            _advance(t, loglam, alpha, gamma, innov, x, dmat,
                     omega, beta, psi, d_a, p_a, k_a, d_g, p_g, k_g)
    return out


@njit(cache=True, nogil=True)
def poisson_draw(rng, lam):
    """One exact Poisson(lam) draw from the generator's uniform stream.

    Sequential CDF inversion below lam=10; Hormann's PTRS transformed
    rejection above. No normal approximation at any mean, valid to 1e7.
    """
    if lam <= 0.0:
        return np.int64(0)
    if lam < 10.0:
        u = rng.random()
        p = math.exp(-lam)
        cdf = p
        k = np.int64(0)
        while u > cdf and k < 400:
            k += 1
            p *= lam / k
            cdf += p
        return k
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= v_r:
            return np.int64(k)
        if k < 0.0 or (us < 0.013 and v > us):
            continue
        if (math.log(v * inv_alpha / (a / (us * us) + b))
                <= k * math.log(lam) - lam - math.lgamma(k + 1.0)):
            return np.int64(k)


@njit(cache=True, nogil=True)
def poisson_array(rng, lam_vec):
    out = np.empty(lam_vec.shape[0], dtype=np.int64)
    for t in range(lam_vec.shape[0]):
        out[t] = poisson_draw(rng, lam_vec[t])
    return out


@njit(cache=True, nogil=True)
def simulate_kernel(rng, T, x, dmat, omega, beta, psi, d_a, p_a, k_a,
                    d_g, p_g, k_g, loglam1, alpha1, gamma1):
    m = x.shape[1]
    y = np.empty(T)
    loglam = np.empty(T)
    lam = np.empty(T)
    alpha = np.empty(T)
    gamma = np.empty((T, m))
    innov = np.empty(T)
    llterms = np.empty(T)
    loglam[0] = _clamp(loglam1)
    alpha[0] = alpha1
    for j in range(m):
        gamma[0, j] = gamma1[j]
    clamp_hits = 0
    for t in range(T):
        lam[t] = np.exp(loglam[t])
        y[t] = poisson_draw(rng, lam[t])
        innov[t] = (y[t] - lam[t]) / lam[t]
        llterms[t] = y[t] * loglam[t] - lam[t]
        if t + 1 < T:
            clamp_hits += _advance(t, loglam, alpha, gamma, innov, x, dmat,
                                   omega, beta, psi, d_a, p_a, k_a,
                                   d_g, p_g, k_g)
    return y, loglam, lam, alpha, gamma, innov, llterms, clamp_hits


@njit(cache=True, nogil=True)
def forecast_kernel(rng, n_paths, horizon, loglam_T, alpha_T, gamma_T,
                    e_T, e_Tm1, x_T, d_T, future_x, future_d,
                    omega, beta, psi, d_a, p_a, k_a, d_g, p_g, k_g):
    """Monte Carlo continuation of the recursion beyond the sample.

    The step to T+1 reuses the observed time-T covariate rows and is the
    same for every path (it is measurable at time T); later steps consume
    future_x/future_d rows and freshly drawn counts.
    """
    m = gamma_T.shape[0]
    lam_mean = np.zeros(horizon)
    y_draws = np.empty((n_paths, horizon), dtype=np.int64)

    # Deterministic step to T+1.
    a1 = d_a + p_a * alpha_T + k_a * e_T * e_Tm1
    z1 = omega + beta * loglam_T + a1 * e_T
    g1 = np.empty(m)
    for j in range(m):
        g1[j] = d_g[j] + p_g[j] * gamma_T[j] + k_g[j] * e_T * x_T[j]
        z1 += g1[j] * x_T[j]
    for j in range(d_T.shape[0]):
        z1 += psi[j] * d_T[j]
    z1 = _clamp(z1)
    lam1 = np.exp(z1)

    gamma_work = np.empty(m)
    for p in range(n_paths):
        loglam_t = z1
        lam_t = lam1
        alpha_t = a1
        for j in range(m):
            gamma_work[j] = g1[j]
        e_prev = e_T
        lam_mean[0] += lam_t
        y_t = poisson_draw(rng, lam_t)
        y_draws[p, 0] = y_t
        e_t = (y_t - lam_t) / lam_t
        for h in range(1, horizon):
            a_next = d_a + p_a * alpha_t + k_a * e_t * e_prev
            z = omega + beta * loglam_t + a_next * e_t
            for j in range(m):
                g = d_g[j] + p_g[j] * gamma_work[j] + k_g[j] * e_t * future_x[h - 1, j]
                gamma_work[j] = g
                z += g * future_x[h - 1, j]
            for j in range(future_d.shape[1]):
                z += psi[j] * future_d[h - 1, j]
            z = _clamp(z)
            lam_t = np.exp(z)
            lam_mean[h] += lam_t
            y_next = poisson_draw(rng, lam_t)
            y_draws[p, h] = y_next
            e_prev = e_t
            e_t = (y_next - lam_t) / lam_t
            loglam_t = z
            alpha_t = a_next
    for h in range(horizon):
        lam_mean[h] /= n_paths
    return lam_mean, y_draws


@njit(cache=True, nogil=True)
def invertibility_kernel(y, omega, beta, d_a, p_a, k_a):
    """Mean log contraction term of the empirical invertibility diagnostic.

    Runs the auxiliary envelope recursion for alpha along the data and
    averages log(beta) + omega + abar_{t+1}*f_t - ell*(1-beta), where
    f_t = y_t*exp(-ell) - 1. The factor for the pre-sample index is zero,
    matching the filter's e_0 convention.
    """
    T = y.shape[0]
    ell = (omega - (d_a + k_a) / (1.0 - p_a)) / (1.0 - beta)
    abar = d_a / (1.0 - p_a)
    scale = math.exp(-ell)
    prev = 0.0
    total = 0.0
    for t in range(T - 1):
        f_t = y[t] * scale - 1.0
        abar = d_a + p_a * abar + k_a * f_t * prev
        total += math.log(beta) + omega + abar * f_t - ell * (1.0 - beta)
        prev = f_t
    return total / (T - 1)


def warmup():
    """Force compilation of every kernel (first call in a fresh cache)."""
    rng = np.random.Generator(np.random.PCG64(0))
    y = np.array([1.0, 2.0, 1.0])
    x = np.zeros((3, 1))
    dmat = np.zeros((3, 1))
    one = np.zeros(1)
    args = (y, x, dmat, 0.1, 0.5, one, 0.05, 0.2, 0.1, one, one, one,
            0.0, 0.0, one)
    filter_kernel(*args)
    loglik_kernel(*args)
    loglik_terms_kernel(*args)
    simulate_kernel(rng, 3, x, dmat, 0.1, 0.5, one, 0.05, 0.2, 0.1,
                    one, one, one, 0.0, 0.0, one)
    forecast_kernel(rng, 2, 2, 0.0, 0.0, one, 0.1, 0.0, one[:1], one[:1],
                    np.zeros((2, 1)), np.zeros((2, 1)),
                    0.1, 0.5, one, 0.05, 0.2, 0.1, one, one, one)
    poisson_array(rng, np.array([2.0, 20.0]))
    invertibility_kernel(y, 0.1, 0.5, 0.05, 0.2, 0.1)
