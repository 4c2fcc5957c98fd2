import math

import numpy as np
import pytest

from qsg.rng import RandomSource


def binom_band(p, n, nsigma=3.0):
    return nsigma * math.sqrt(p * (1.0 - p) / n)


def assert_frequencies(counts, probs, nsigma=3.0):
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    for c, p in zip(counts, probs):
        assert abs(c / n - p) <= binom_band(p, n, nsigma) + 1e-15, (c / n, p)


def assert_simplex(x, tol=1e-9):
    x = np.asarray(x)
    assert np.all(x >= -1e-12)
    assert abs(x.sum(axis=-1) - 1.0).max() <= tol


@pytest.fixture
def gen():
    return RandomSource(20240601).generator()


def random_state(gen, N, K, concentration=1.0):
    return gen.dirichlet(np.full(K, concentration), size=N)
