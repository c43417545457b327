from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from copulasim.model import (
    DoseGrid,
    MarginSpec,
    ParamVector,
    bernoulli,
    curve_distances,
    curve_jacobian,
    d_max,
    eval_curve,
    gaussian,
    max_distance,
    n_params,
    rescale_outcome,
    transform_params,
    untransform_params,
)


def test_parse_margin_spec():
    assert MarginSpec.parse("bernoulli/logit/linear") == bernoulli("logit", "linear")
    assert MarginSpec.parse("gaussian/quadratic") == gaussian("quadratic")
    assert str(MarginSpec.parse(" Gaussian / identity / linear ")) == "gaussian/identity/linear"
    for bad in ("gaussian/logit/linear", "poisson/log/linear", "bernoulli/logit/cubic", "x"):
        with pytest.raises(ValueError):
            MarginSpec.parse(bad)


def test_param_vector_roundtrip():
    specs = (gaussian("quadratic"), bernoulli())
    assert n_params(specs) == 3 + 2 + 1 + 1
    p = ParamVector(((0.3, 0.7, -0.4), (-2.5, 1.8)), (0.2, None), -0.3)
    arr = p.to_array()
    assert arr.tolist() == [0.3, 0.7, -0.4, -2.5, 1.8, 0.2, -0.3]
    q = ParamVector.from_array(specs, arr)
    assert q.sigma == (0.2, None) and q.rho == -0.3
    back = untransform_params(specs, transform_params(p))
    assert np.allclose(back.to_array(), arr, atol=1e-15)
    with pytest.raises(ValueError):
        ParamVector(((0, 1), (0, 1)), (-1.0, None), 0.0)
    with pytest.raises(ValueError):
        ParamVector(((0, 1), (0, 1)), (None, None), 1.0)


def test_curves_and_links():
    x = np.array([0.0, 0.5, 2.0])
    assert np.allclose(eval_curve(gaussian("quadratic"), (1, 2, 3), x), 1 + 2 * x + 3 * x * x)
    assert np.allclose(eval_curve(bernoulli("logit"), (-1, 2), x), expit(-1 + 2 * x))
    from scipy.stats import norm
    assert np.allclose(eval_curve(bernoulli("probit"), (-1, 2), x), norm.cdf(-1 + 2 * x))
    assert np.allclose(eval_curve(bernoulli("cloglog"), (-1, 2), x), 1 - np.exp(-np.exp(-1 + 2 * x)))
    assert isinstance(eval_curve(gaussian(), (0, 1), 0.3), float)


@pytest.mark.parametrize("spec,theta", [(bernoulli("logit"), (-1.0, 2.0)), (bernoulli("probit"), (0.3, -0.7)),
                                        (bernoulli("cloglog"), (-0.5, 1.0)), (gaussian("quadratic"), (1, -2, 0.5))])
def test_curve_jacobian_matches_fd(spec, theta):
    x = np.linspace(0, 2, 7)
    J = curve_jacobian(spec, theta, x)
    h = 1e-6
    for j in range(len(theta)):
        tp = np.array(theta, float); tp[j] += h
        tm = np.array(theta, float); tm[j] -= h
        fd = (eval_curve(spec, tp, x) - eval_curve(spec, tm, x)) / (2 * h)
        assert np.allclose(J[:, j], fd, atol=1e-8)


def test_max_distance_quadratic_family():
    g = DoseGrid.linspace(0, 2, 1001)
    for d in (0.0, 0.05, 0.15, 0.2):
        dist, x = max_distance(gaussian(), (0, 1), gaussian("quadratic"), (0, 1 - 2 * d, d), g)
        assert dist == pytest.approx(d, abs=1e-12)
        if d > 0:
            assert x == pytest.approx(1.0)


def test_max_distance_tie_goes_to_smallest_dose():
    g = DoseGrid(np.array([0.0, 1.0, 2.0]))
    # |0 - (x-1)^2 + ... | equal at 0 and 2
    d, x = max_distance(gaussian("quadratic"), (0, 0, 0), gaussian("quadratic"), (1, -2, 1), g)
    assert d == 1.0 and x == 0.0


def test_scale_mismatch_rejected():
    with pytest.raises(ValueError):
        max_distance(gaussian(), (0, 1), bernoulli(), (0, 1), DoseGrid.linspace(0, 1, 3))


def test_d_max_and_outcome_index():
    r = d_max([(0.1, 0.3), (0.25, 1.0)])
    assert r.d_max == 0.25 and r.outcome == 1 and r.as_dict()["outcome"] == 2
    assert d_max([(0.2, 0.0), (0.2, 1.0)]).outcome == 0
    with pytest.raises(ValueError):
        d_max([])


def test_curve_distances_subset():
    specs = (gaussian(), bernoulli())
    p1 = ParamVector(((0, 1), (-1, 2)), (1.0, None), 0.0)
    p2 = ParamVector(((0.1, 1), (-1, 2)), (1.0, None), 0.0)
    g = DoseGrid.linspace(0, 2, 11)
    full = curve_distances(specs, p1, specs, p2, g)
    assert full.d[0] == pytest.approx(0.1) and full.d[1] == 0.0
    sub = curve_distances(specs, p1, specs, p2, g, outcomes=(1,))
    assert sub.d_max == 0.0 and sub.outcome == 1


@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=5))
@settings(max_examples=50, deadline=None)
def test_d_max_is_max(ds):
    assert d_max([(d, 0.0) for d in ds]).d_max == max(ds)


def test_grid_validation():
    with pytest.raises(ValueError):
        DoseGrid(np.array([0.0]))
    with pytest.raises(ValueError):
        DoseGrid(np.array([0.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        DoseGrid.linspace(1, 0)
    assert len(DoseGrid.linspace(0, 2)) == 101


def test_rescale_outcome():
    assert np.allclose(rescale_outcome([0.3, 0.6], 0.3, 0.15), [0.15, 0.3])
    with pytest.raises(ValueError):
        rescale_outcome([1.0], 0.3, 0.15, kind="binary")
