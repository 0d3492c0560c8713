import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from dfs_cavity.core import SystemParams

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@st.composite
def physical_params(draw, max_rate=0.1, max_freq=1.5):
    """Random coefficients with a positive semidefinite jump matrix."""
    f = st.floats(-max_freq, max_freq, allow_nan=False)
    k = st.floats(0.0, max_rate, allow_nan=False)
    shift = st.floats(-0.05, 0.05, allow_nan=False)
    k11, k22 = draw(k), draw(k)
    s = draw(st.floats(0.0, 1.0))
    theta = draw(st.floats(0.0, 2 * math.pi))
    g = s * math.sqrt(k11 * k22)
    split = draw(st.floats(-0.01, 0.01))
    dsum = draw(shift)
    return SystemParams(
        omega1=draw(f), omega2=draw(f), k11=k11, k22=k22,
        k12=g * math.cos(theta) + split, k21=g * math.cos(theta) - split,
        delta11=draw(shift), delta22=draw(shift),
        delta12=dsum / 2 + g * math.sin(theta), delta21=dsum / 2 - g * math.sin(theta),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def general_params():
    return SystemParams(
        omega1=1.1, omega2=0.8, k11=0.05, k22=0.08, k12=0.04, k21=0.05,
        delta11=0.01, delta22=-0.02, delta12=0.005, delta21=0.01,
    )
