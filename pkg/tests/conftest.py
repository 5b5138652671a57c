import numpy as np
import pytest

from specgp.data import generate_synthetic
from specgp.kernels import HyperBox
from specgp.quadrature import build_integrand_family
from specgp.rule import embedded_rule

SMALL_BOX = HyperBox(nu_lo=2.5, nu_hi=3.5, rho_lo=0.3, rho_hi=0.5, a=-0.5, b=0.5)


@pytest.fixture(scope="session")
def rule():
    return embedded_rule()


@pytest.fixture(scope="session")
def small_box():
    return SMALL_BOX


@pytest.fixture(scope="session")
def small_family():
    return build_integrand_family(SMALL_BOX, 8, 32, 1e-4)


@pytest.fixture(scope="session")
def synthetic_500():
    return generate_synthetic(500, 0.5, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
