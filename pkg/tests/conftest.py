import numpy as np
import pytest

from dptraverse.observation import Observation, identity_operator
from dptraverse.posterior import gaussian_posterior, gm_posterior
from dptraverse.priors import GaussianMixture, gaussian
from dptraverse.schedule import default_schedule


@pytest.fixture(scope="session")
def schedule():
    return default_schedule()


@pytest.fixture(scope="session")
def unit_prior():
    return gaussian(0.0, 1.0)


@pytest.fixture(scope="session")
def running_obs():
    """The 1D running case: y = x + n with sigma_y = 1, observed y = 1."""
    return Observation(y=np.array([1.0]), operator=identity_operator(1), sigma_y=1.0)


@pytest.fixture(scope="session")
def running_posterior(unit_prior, running_obs):
    return gaussian_posterior(unit_prior, running_obs)  # N(0.5, 0.5)


@pytest.fixture(scope="session")
def two_mode_prior():
    return GaussianMixture(weights=[0.5, 0.5], means=[[-2.0], [2.0]],
                           covs=[[[1.0]], [[1.0]]])


@pytest.fixture(scope="session")
def two_mode_posterior(two_mode_prior, running_obs):
    """Weights ~ (0.1192, 0.8808), component means (-0.5, 1.5), variances 0.5."""
    return gm_posterior(two_mode_prior, running_obs)
