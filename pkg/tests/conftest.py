import numpy as np
import pytest
from hypothesis import strategies as st


def random_spd(rng, n, lo=0.1, hi=10.0):
    """SPD matrix with eigenvalues drawn uniformly from [lo, hi]."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = rng.uniform(lo, hi, size=n)
    m = (q * lam) @ q.T
    return 0.5 * (m + m.T)


@st.composite
def spd_matrices(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_spd(np.random.default_rng(seed), n)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def fd_derivative(t, y):
    """Three-point derivative on a nonuniform grid, at the interior samples ``t[1:-1]``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return (
        -h2 / (h1 * (h1 + h2)) * y[:-2]
        + (h2 - h1) / (h1 * h2) * y[1:-1]
        + h1 / (h2 * (h1 + h2)) * y[2:]
    )
