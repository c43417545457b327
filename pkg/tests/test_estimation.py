from __future__ import annotations

import numpy as np
import pytest
from scipy import optimize, stats

from copulasim.datagen import GroupGenSpec, RngStream, simulate_group
from copulasim.estimation import (
    CONVERGED,
    PASSTHROUGH,
    default_start,
    finite_diff_gradient,
    fit_constrained,
    fit_mle,
)
from copulasim.likelihood import joint_loglik
from copulasim.model import DoseGrid, ParamVector, bernoulli, curve_distances, gaussian


def test_finite_diff_gradient_quadratic():
    f = lambda x: float(x @ x + 3 * x[0])
    x = np.array([0.5, -2.0, 1.0])
    assert np.allclose(finite_diff_gradient(f, x), 2 * x + [3, 0, 0], atol=1e-7)


def test_cont_cont_mle_matches_closed_form(cont_pair):
    """Bivariate normal with common design: OLS per outcome, ML variances, sample correlation."""
    s, _, specs = cont_pair
    fit = fit_mle(s, specs)
    assert fit.status == CONVERGED
    X = np.column_stack([np.ones_like(s.dose), s.dose])
    b1, *_ = np.linalg.lstsq(X, s.y1, rcond=None)
    b2, *_ = np.linalg.lstsq(X, s.y2, rcond=None)
    r1, r2 = s.y1 - X @ b1, s.y2 - X @ b2
    sd1, sd2 = np.sqrt(np.mean(r1 ** 2)), np.sqrt(np.mean(r2 ** 2))
    p = fit.params
    assert np.allclose(p.coef[0], b1, atol=1e-5) and np.allclose(p.coef[1], b2, atol=1e-5)
    assert p.sigma[0] == pytest.approx(sd1, rel=1e-5) and p.sigma[1] == pytest.approx(sd2, rel=1e-5)
    assert p.rho == pytest.approx(np.mean(r1 * r2) / (sd1 * sd2), abs=1e-5)


def test_mixed_mle_beats_perturbations(mixed_pair):
    s, _, specs = mixed_pair
    fit = fit_mle(s, specs)
    assert fit.ok and not fit.separated
    base = fit.params.to_array()
    rng = np.random.default_rng(0)
    for _ in range(10):
        q = ParamVector.from_array(specs, base + rng.normal(0, 1e-3, base.size))
        assert joint_loglik(s, specs, q) <= fit.loglik + 1e-9


def test_mixed_rho_zero_margins_agree_with_marginal_fits(mixed_pair):
    """Efficacy coefficients are close to OLS and toxicity to the marginal logistic MLE."""
    s, _, specs = mixed_pair
    fit = fit_mle(s, specs)
    X = np.column_stack([np.ones_like(s.dose), s.dose, s.dose ** 2])
    ols, *_ = np.linalg.lstsq(X, s.y1, rcond=None)
    Xb = X[:, :2]
    nll = lambda b: -stats.bernoulli.logpmf(s.y2, 1 / (1 + np.exp(-Xb @ b))).sum()
    logit = optimize.minimize(nll, np.zeros(2)).x
    assert np.allclose(fit.params.coef[0], ols, atol=0.05)
    assert np.allclose(fit.params.coef[1], logit, atol=0.3)


def test_bin_bin_mle_converges(binbin_pair):
    s, _, specs = binbin_pair
    fit = fit_mle(s, specs)
    assert fit.ok and abs(fit.params.rho) < 1
    # starting from the truth gives the same optimum
    again = fit_mle(s, specs, init=fit.params)
    assert np.allclose(again.params.to_array(), fit.params.to_array(), atol=1e-4)


def test_separation_is_flagged():
    specs = (gaussian(), bernoulli())
    p = ParamVector(((0.0, 1.0), (-1.0, 2.0)), (0.3, None), 0.2)
    s = simulate_group(GroupGenSpec(specs, p, (0.0, 1.0, 2.0), (10,)), RngStream(1))
    y2 = (s.dose > 0.5).astype(float)
    from copulasim.likelihood import GroupSample
    sep = GroupSample(s.dose, s.y1, y2, s.kinds)
    fit = fit_mle(sep, specs)
    assert fit.separated


def test_default_start():
    specs = (gaussian(), bernoulli())
    from copulasim.likelihood import GroupSample
    s = GroupSample(np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0, 3.0]), np.array([0.0, 1.0, 1.0]),
                    ("continuous", "binary"))
    p = default_start(s, specs)
    assert p.sigma == (1.0, None) and p.rho == 0.0


def _grid(*samples, n=101):
    lo = min(s.dose.min() for s in samples)
    hi = max(s.dose.max() for s in samples)
    return DoseGrid.linspace(lo, hi, n)


def test_constrained_passthrough_when_distance_large(mixed_pair):
    s1, s2, specs = mixed_pair
    fits = (fit_mle(s1, specs), fit_mle(s2, specs))
    g = _grid(s1, s2)
    d = curve_distances(specs, fits[0].params, specs, fits[1].params, g).d_max
    c = fit_constrained(s1, s2, specs, specs, d * 0.5, g, fits)
    assert c.status == PASSTHROUGH and c.d_max == d


@pytest.mark.parametrize("pair,eps", [("mixed_pair", 0.2), ("binbin_pair", 0.25), ("cont_pair", 0.3)])
def test_constrained_on_boundary(pair, eps, request):
    s1, s2, specs = request.getfixturevalue(pair)
    fits = (fit_mle(s1, specs), fit_mle(s2, specs))
    g = _grid(s1, s2)
    c = fit_constrained(s1, s2, specs, specs, eps, g, fits)
    assert c.ok and c.residual <= 1e-4
    d = curve_distances(specs, c.params[0], specs, c.params[1], g).d_max
    assert d == pytest.approx(eps, abs=1e-4)
    # constrained optimum cannot beat the unconstrained one
    assert c.loglik <= fits[0].loglik + fits[1].loglik + 1e-8


def test_constrained_single_outcome(mixed_pair):
    s1, s2, specs = mixed_pair
    fits = (fit_mle(s1, specs), fit_mle(s2, specs))
    g = _grid(s1, s2)
    c = fit_constrained(s1, s2, specs, specs, 0.15, g, fits, outcomes=(1,))
    d = curve_distances(specs, c.params[0], specs, c.params[1], g, (1,)).d_max
    assert c.ok and d == pytest.approx(0.15, abs=1e-4)


def test_constrained_rejects_nonpositive_eps(mixed_pair):
    s1, s2, specs = mixed_pair
    fits = (fit_mle(s1, specs), fit_mle(s2, specs))
    with pytest.raises(ValueError):
        fit_constrained(s1, s2, specs, specs, 0.0, _grid(s1, s2), fits)


def test_association_on_boundary_converges():
    """No joint events: rho is pushed to (or near) the lower bound and the fit still converges."""
    from copulasim.estimation import RHO_MAX
    from copulasim.likelihood import GroupSample
    dose = np.repeat([0.0, 0.5, 1.0, 1.5, 2.0], 8)
    rng = np.random.default_rng(3)
    y1 = (rng.random(dose.size) < 0.5).astype(float)
    y2 = np.where(y1 == 1, 0.0, (rng.random(dose.size) < 0.4).astype(float))
    s = GroupSample(dose, y1, y2, ("binary", "binary"))
    fit = fit_mle(s, (bernoulli(), bernoulli()))
    assert fit.ok and -RHO_MAX <= fit.params.rho < -0.99


def test_association_bound_is_enforced():
    from copulasim.estimation import RHO_MAX
    from copulasim.likelihood import GroupSample
    # two doses, identical outcomes within each: perfect association
    dose = np.repeat([0.0, 1.0], 10)
    y = np.tile([0.0, 1.0], 10)
    s = GroupSample(dose, y, y.copy(), ("binary", "binary"))
    fit = fit_mle(s, (bernoulli(), bernoulli()))
    assert fit.ok and fit.params.rho == pytest.approx(RHO_MAX, abs=1e-12)


def test_finite_diff_trivial():
    assert finite_diff_gradient(lambda x: float(x[0] ** 2), np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-6)


def test_mle_invariant_to_row_order(mixed_pair):
    s, _, specs = mixed_pair
    perm = s.permuted(np.random.default_rng(1).permutation(len(s)))
    assert fit_mle(perm, specs).loglik == pytest.approx(fit_mle(s, specs).loglik, abs=1e-6)


def test_epsilon_at_estimate_returns_mle(mixed_pair):
    s1, s2, specs = mixed_pair
    fits = (fit_mle(s1, specs), fit_mle(s2, specs))
    g = _grid(s1, s2)
    d_hat = curve_distances(specs, fits[0].params, specs, fits[1].params, g).d_max
    c = fit_constrained(s1, s2, specs, specs, d_hat, g, fits)
    assert abs(c.loglik - (fits[0].loglik + fits[1].loglik)) <= 1e-6


def test_constrained_loglik_rises_as_epsilon_nears_estimate(cont_pair):
    """On a common dataset the boundary log-likelihood increases as eps moves down towards d_hat."""
    s1, s2, specs = cont_pair
    fits = (fit_mle(s1, specs), fit_mle(s2, specs))
    g = _grid(s1, s2)
    d_hat = curve_distances(specs, fits[0].params, specs, fits[1].params, g).d_max
    lls = [fit_constrained(s1, s2, specs, specs, d_hat + step, g, fits).loglik for step in (0.15, 0.1, 0.05)]
    assert lls[0] < lls[1] < lls[2] < fits[0].loglik + fits[1].loglik
