import pytest

from kbrw.analysis import solve_tstar
from kbrw.models import (BinaryBernoulli, DiscreteFinite, ExplicitFinite,
                         Gaussian, ProductLaw)
from kbrw.spine import make_spine
from kbrw.transform import make_vlaw

P0 = 0.0669872981077807  # root of 16 p (1 - p) = 1 in (0, 1/2)


@pytest.fixture(scope="session")
def law_p03():
    return BinaryBernoulli(0.3)


@pytest.fixture(scope="session")
def profile_p03(law_p03):
    return solve_tstar(law_p03)


@pytest.fixture(scope="session")
def vlaw_p03(law_p03, profile_p03):
    return make_vlaw(law_p03, profile_p03)


@pytest.fixture(scope="session")
def spine_p03(vlaw_p03):
    return make_spine(vlaw_p03)


@pytest.fixture(scope="session")
def law_p0():
    return BinaryBernoulli(P0)


@pytest.fixture(scope="session")
def profile_p0(law_p0):
    return solve_tstar(law_p0)


@pytest.fixture(scope="session")
def law_explicit():
    # atomic broods with dependent displacements; E[Z] = 2, top intensity 0.2
    return ExplicitFinite((((0.0, 0.0), 0.5), ((0.0, 1.0), 0.3), ((1.0, 2.0), 0.2)))


@pytest.fixture(scope="session")
def law_gaussian():
    return ProductLaw(((1, 0.5), (3, 0.5)), Gaussian(0.0, 1.0))


@pytest.fixture(scope="session")
def law_mixed_offspring():
    # supercritical GW with deaths allowed, fair Bernoulli steps
    return ProductLaw(((0, 0.2), (1, 0.3), (2, 0.3), (3, 0.2)),
                      DiscreteFinite(((0.0, 0.5), (1.0, 0.5))))
