import numpy as np
import pytest

from tvparx import FilterInit, ModelSpec, ParamVector, SeriesData


def make_theta(omega=0.1, beta=0.5, psi=(), delta_alpha=0.05, phi_alpha=0.2,
               kappa_alpha=0.1, gamma_blocks=None) -> ParamVector:
    gb = (np.zeros((0, 3)) if gamma_blocks is None
          else np.asarray(gamma_blocks, dtype=np.float64))
    return ParamVector(omega=omega, beta=beta, psi=np.asarray(psi, dtype=np.float64),
                       delta_alpha=delta_alpha, phi_alpha=phi_alpha,
                       kappa_alpha=kappa_alpha, gamma_blocks=gb)


@pytest.fixture
def theta_std() -> ParamVector:
    # the hand-unrolled reference parameterization used across oracle tests
    return make_theta()


@pytest.fixture
def data_132() -> SeriesData:
    return SeriesData(np.array([1, 3, 2], dtype=np.int64))


@pytest.fixture
def init_unit() -> FilterInit:
    return FilterInit(lambda1=1.0, alpha1=0.05, gamma1=np.zeros(0))


@pytest.fixture
def spec_tv() -> ModelSpec:
    return ModelSpec(n_covariates=0, n_deterministics=0, alpha_time_varying=True)


@pytest.fixture
def spec_static() -> ModelSpec:
    return ModelSpec(n_covariates=0, n_deterministics=0, alpha_time_varying=False)


def stable_theta() -> ParamVector:
    # satisfies the sufficient stationarity conditions with room to spare
    return make_theta(omega=0.1, beta=0.8, delta_alpha=0.05, phi_alpha=0.5,
                      kappa_alpha=0.1)
