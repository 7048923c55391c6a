import numpy as np
import pytest

from infodrift import MarketCoefficients, RngSpec, build_grid


@pytest.fixture(scope="session")
def coeffs():
    # the reference market: M0 = 0.2, M1 = 0.3
    return MarketCoefficients(r0=0.01, r1=0.01, eta0=0.05, eta1=0.1, xi0=0.2, xi1=0.3)


@pytest.fixture(scope="session")
def unit_grid():
    return build_grid([0.0, 1.0], 200)


@pytest.fixture(scope="session")
def two_grid():
    return build_grid([0.0, 1.0, 2.0], 200)


def assert_within_se(value, target, stderr, n_se=3.0, msg=""):
    assert stderr >= 0.0
    assert abs(value - target) <= n_se * stderr + 1e-15, (
        f"{msg}: {value} vs {target} differs by {abs(value-target):.3e} "
        f"> {n_se} x {stderr:.3e}"
    )


@pytest.fixture(scope="session")
def rng():
    return RngSpec(20260810)
