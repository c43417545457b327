from __future__ import annotations

import numpy as np
import pytest

from copulasim.datagen import GroupGenSpec, RngStream, simulate_group
from copulasim.model import ParamVector, bernoulli, gaussian

MIXED = (gaussian("quadratic"), bernoulli("logit", "linear"))
BINBIN = (bernoulli("logit", "linear"), bernoulli("logit", "linear"))
CONT = (gaussian("linear"), gaussian("linear"))


@pytest.fixture(scope="session")
def mixed_pair():
    """Case-study-like mixed samples (30 per dose) and their specs."""
    p1 = ParamVector(((0.303, 0.715, -0.369), (-2.492, 1.797)), (0.18, None), 0.2)
    p2 = ParamVector(((0.259, 0.416, 0.062), (-2.136, 1.263)), (0.18, None), 0.2)
    s1 = simulate_group(GroupGenSpec(MIXED, p1, (0, .1, .3, .6, 1), (30,)), RngStream(11, 0, 1))
    s2 = simulate_group(GroupGenSpec(MIXED, p2, (0, .05, .2, .5, 1), (30,)), RngStream(11, 0, 2))
    return s1, s2, MIXED


@pytest.fixture(scope="session")
def binbin_pair():
    p1 = ParamVector(((-1.0, 2.0), (-3.0, 3.0)), (None, None), 0.3)
    p2 = ParamVector(((-1.2, 2.2), (-2.8, 2.9)), (None, None), 0.3)
    doses = (0, .1, .2, .5, 1, 1.5, 2)
    s1 = simulate_group(GroupGenSpec(BINBIN, p1, doses, (40,)), RngStream(5, 0, 1))
    s2 = simulate_group(GroupGenSpec(BINBIN, p2, doses, (40,)), RngStream(5, 0, 2))
    return s1, s2, BINBIN


@pytest.fixture(scope="session")
def cont_pair():
    p1 = ParamVector(((0.0, 1.0), (0.0, 1.0)), (0.3, 0.3), 0.4)
    p2 = ParamVector(((0.1, 0.9), (0.05, 1.0)), (0.3, 0.3), 0.4)
    doses = (0, .5, 1, 1.5, 2)
    s1 = simulate_group(GroupGenSpec(CONT, p1, doses, (20,)), RngStream(3, 0, 1))
    s2 = simulate_group(GroupGenSpec(CONT, p2, doses, (20,)), RngStream(3, 0, 2))
    return s1, s2, CONT


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
