import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from multigroup.core import FiniteDistribution, GroupFamily, HypothesisClass, LossSpec

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_instance(rng, m, nH, nG, k=2, cover=False):
    mass = rng.dirichlet(np.ones(m))
    ld = rng.dirichlet(np.full(k, 0.7), size=m)
    H = HypothesisClass(rng.integers(0, k, size=(nH, m)))
    gm = rng.random((nG, m)) < 0.5
    gm[np.arange(nG), rng.integers(0, m, nG)] = True  # no empty group
    if cover:
        gm[0, ~gm.any(axis=0)] = True
    return FiniteDistribution(mass, ld, labels=tuple(range(k))), H, GroupFamily(gm.astype(int)), LossSpec.zero_one(k)


@st.composite
def instances(draw, max_points=6, max_h=4, max_g=4, max_labels=3, cover=False):
    seed = draw(st.integers(0, 2**32 - 1))
    m = draw(st.integers(1, max_points))
    nH = draw(st.integers(1, max_h))
    nG = draw(st.integers(1, max_g))
    k = draw(st.integers(2, max_labels))
    return make_instance(np.random.default_rng(seed), m, nH, nG, k, cover)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line[1])
