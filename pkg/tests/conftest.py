import numpy as np
import pytest

from symode.scalars import ToleranceConfig

S1 = np.array([[0.0, 1.0], [0.0, 0.0]])
S2 = np.array([[1.0, 0.0], [0.0, -1.0]])
S3 = np.array([[0.0, 0.0], [-1.0, 0.0]])
Z2 = np.zeros((2, 2))
E2 = np.eye(2)
DOM = (-1.0, 1.0)


@pytest.fixture
def cfg():
    return ToleranceConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)


def random_traceless(rng, n, complex_field=False):
    m = rng.standard_normal((n, n))
    if complex_field:
        m = m + 1j * rng.standard_normal((n, n))
    return m - (np.trace(m) / n) * np.eye(n)
