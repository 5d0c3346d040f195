import numpy as np
import pytest

from ltpid import PeriodicStateSpace


def make_random_system(rng, period, nx, spectral_norm=0.85):
    """Random periodic system, stable by construction.

    Every A matrix is rescaled to the requested spectral norm, so the
    monodromy spectral radius is at most spectral_norm**period. Independent
    of the modal generator the library uses for its Monte Carlo bank.
    """
    A = rng.standard_normal((period, nx, nx))
    for j in range(period):
        A[j] *= spectral_norm / np.linalg.norm(A[j], 2)
    B = rng.standard_normal((period, nx))
    C = rng.standard_normal((period, nx))
    return PeriodicStateSpace(A=A, B=B, C=C)


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)


@pytest.fixture
def make_system():
    return make_random_system
