"""Similarity testing of bivariate dose-response curves under a Gaussian copula."""

from __future__ import annotations

__version__ = "0.1.0"

from ._accel import backend_name
from .datagen import GroupGenSpec, RngStream, simulate_group
from .estimation import OptimizerSettings, fit_constrained, fit_mle
from .likelihood import BINARY, CONTINUOUS, GroupSample, joint_loglik
from .model import DoseGrid, MarginSpec, ParamVector, bernoulli, curve_distances, gaussian
from .testing import TestConfig, TestResult, iut_test, similarity_test

__all__ = [
    "BINARY", "CONTINUOUS", "DoseGrid", "GroupGenSpec", "GroupSample", "MarginSpec",
    "OptimizerSettings", "ParamVector", "RngStream", "TestConfig", "TestResult",
    "backend_name", "bernoulli", "curve_distances", "fit_constrained", "fit_mle",
    "gaussian", "iut_test", "joint_loglik", "simulate_group", "similarity_test",
    "__version__",
]
