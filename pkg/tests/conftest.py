import numpy as np
import pytest

from csiauth.embedding import EmissionStats


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T / d + 0.5 * np.eye(d))


def random_stats(rng, d, sigma=None, reg_eps=0.0):
    return EmissionStats(mu=rng.standard_normal(d),
                         sigma=random_spd(rng, d) if sigma is None else sigma,
                         reg_eps=reg_eps)
