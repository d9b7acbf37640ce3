import numpy as np
import pytest

from cavity_cz import SystemParams


@pytest.fixture(scope="session")
def sec5():
    return SystemParams.paper_sec5()


@pytest.fixture(scope="session")
def idle():
    """All couplings, drives and detunings zero: H = 0."""
    return SystemParams(g_A=0, g_B=0, Omega_A=0, Omega_B=0, Delta_A=0, Delta_B=0, delta=0, nu=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_params(rng, n_max=2):
    """Valid parameters away from every resonance, with complex couplings."""
    ph = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    return SystemParams(
        g_A=rng.uniform(0.05, 0.2) * ph[0], g_B=rng.uniform(0.05, 0.2) * ph[1],
        Omega_A=rng.uniform(5, 15) * ph[2], Omega_B=rng.uniform(5, 15) * ph[3],
        Delta_A=rng.uniform(150, 250), Delta_B=rng.uniform(150, 250),
        delta=rng.uniform(0.1, 0.4), nu=rng.uniform(0.8, 1.6), n_max=n_max,
    )
