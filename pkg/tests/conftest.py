import numpy as np
import pytest

from vrd.core import VrdParams


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_params(rng, n_in, n_out, scale=0.3):
    return VrdParams(
        r_b=scale * rng.standard_normal((n_out, n_out)),
        r_q=scale * rng.standard_normal((n_out, n_out)),
        b_i=rng.standard_normal((n_out, n_in)),
        q_i=rng.standard_normal((n_out, n_in)),
    )


def random_spd(rng, n, shift=0.5):
    m = rng.standard_normal((n, n))
    return m @ m.T + shift * np.eye(n)
