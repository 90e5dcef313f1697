"""Shared fixtures.

The expensive objects (equilibrium data with the Fourier engine, biorthogonal
systems at 12*n digits) are built once per session and shared across modules.
"""

import pytest

from biorthlab.biortho import construct
from biorthlab.equilibrium import Potential, build_equilibrium, reflect_potential
from biorthlab.mpnum import PrecisionContext

QUAD = ("0", "0", "1/2")
QUARTIC = ("0", "0", "1/2", "0", "1/20")


def ctx_for(n):
    return PrecisionContext.for_digits(max(64, 12 * n))


@pytest.fixture(scope="session")
def quad():
    return Potential(QUAD)


@pytest.fixture(scope="session")
def quartic():
    return Potential(QUARTIC)


@pytest.fixture(scope="session")
def ctx64():
    return PrecisionContext.for_digits(64)


@pytest.fixture(scope="session")
def ctx96():
    return PrecisionContext.for_digits(96)


@pytest.fixture(scope="session")
def eq_unit(quad, ctx96):
    # one engine-backed equilibrium at t = 1 serves every kernel comparison
    return build_equilibrium(quad, 1, ctx96)


@pytest.fixture(scope="session")
def sys8(quad):
    return construct(quad, 8, 9, ctx_for(8))


@pytest.fixture(scope="session")
def sys12(quad):
    return construct(quad, 12, 13, ctx_for(12))


@pytest.fixture(scope="session")
def sys16(quad):
    # m = n + 2 so the summation-window tables at delta = 0.15 fit
    return construct(quad, 16, 18, ctx_for(16))


@pytest.fixture(scope="session")
def sys18(quad):
    return construct(quad, 18, 19, ctx_for(18))


@pytest.fixture(scope="session")
def sys24(quad):
    # m = 29 leaves room for the full main-term window at M = 6
    return construct(quad, 24, 29, ctx_for(24))


@pytest.fixture(scope="session")
def sys32(quad):
    return construct(quad, 32, 33, ctx_for(32))


@pytest.fixture(scope="session")
def eq_hat96(ctx96):
    # reflected-potential equilibrium: V(-x) plus a unit linear drift
    return build_equilibrium(Potential(("0", "1", "1/2")), 1, ctx96)


@pytest.fixture(scope="session")
def sys32_hat(quad):
    vhat = reflect_potential(quad, 32)
    return construct(vhat, 32, 33, ctx_for(32))
