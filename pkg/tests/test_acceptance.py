"""Acceptance criteria; each test prints one PASS/FAIL line.

Criteria 3 and 4 run hundreds of simulated trials and are marked ``slow``
(``pytest -m slow tests/test_acceptance.py``).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import stats

from copulasim import casestudy
from copulasim.datagen import (
    GroupGenSpec,
    RngStream,
    ep_latent_correlation,
    sample_correlated_binary,
    sample_mixed,
    simulate_group,
)
from copulasim.estimation import PASSTHROUGH, finite_diff_gradient, fit_constrained, fit_mle
from copulasim.likelihood import Objective, loglik_bin_bin, loglik_cont_cont, loglik_mixed
from copulasim.model import DoseGrid, ParamVector, curve_distances, eval_curve, transform_params
from copulasim.numerics import bvn_cdf, copula_cdf, copula_density, copula_hfunc, normal_cdf
from copulasim.simharness import GROUP_SIZES, find_scenario, run_scenario
from copulasim.testing import SEED_SWEEP, TestConfig, default_threads, similarity_test

# case-study distances: (value, tolerance), argmax dose (value, tolerance)
D_EFFICACY = ((0.0958, 0.002), (0.35, 0.01))
D_TOXICITY = ((0.0385, 0.002), (1.0, 0.01))
D_MAX = (0.096, 0.002)
COEF_TOL = 1e-3
# toxicity counts are integers, so the surrogate cannot hit the binary
# coefficients exactly
SURROGATE_TOX_TOL = 0.02
# (epsilon, reject, reference p-value); tolerance widened for surrogate data
DECISIONS = ((0.2, True, 0.003), (0.15, True, 0.023), (0.1, False, 0.136))
P_TOL = 0.03


def report(capsys, criterion: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, detail


def _case_study_fits():
    s1, s2 = casestudy.load_case_study()
    fits = (fit_mle(s1, casestudy.SPECS), fit_mle(s2, casestudy.SPECS))
    return s1, s2, fits


CASE_GRID = DoseGrid.linspace(0.0, 1.0, 101)


def test_criterion_1_case_study_distances(capsys):
    t0 = time.perf_counter()
    s1, s2, fits = _case_study_fits()
    dist = curve_distances(casestudy.SPECS, fits[0].params, casestudy.SPECS, fits[1].params, CASE_GRID)
    elapsed = time.perf_counter() - t0
    (de, te), (xe, txe) = D_EFFICACY
    (dt, tt), (xt, txt) = D_TOXICITY
    coef_err = []
    for g in (0, 1):
        eff, tox = casestudy.PUBLISHED_COEF[g]
        coef_err.append((np.max(np.abs(fits[g].params.coef[0] - eff)),
                         np.max(np.abs(fits[g].params.coef[1] - tox))))
    eff_err = max(e for e, _ in coef_err)
    tox_err = max(t for _, t in coef_err)
    ok = (all(f.ok for f in fits)
          and abs(dist.d[0] - de) <= te and abs(dist.argmax_dose[0] - xe) <= txe
          and abs(dist.d[1] - dt) <= tt and abs(dist.argmax_dose[1] - xt) <= txt
          and abs(dist.d_max - D_MAX[0]) <= D_MAX[1]
          and eff_err <= COEF_TOL and tox_err <= SURROGATE_TOX_TOL and elapsed < 10.0)
    report(capsys, 1, ok,
           f"d_eff={dist.d[0]:.4f}@{dist.argmax_dose[0]:.2f} d_tox={dist.d[1]:.4f}@{dist.argmax_dose[1]:.2f} "
           f"d_max={dist.d_max:.4f}; coef err efficacy {eff_err:.1e} (tol {COEF_TOL:g}), toxicity "
           f"{tox_err:.1e} (surrogate tol {SURROGATE_TOX_TOL:g}); {elapsed:.2f}s")


def test_criterion_2_case_study_decisions(capsys):
    t0 = time.perf_counter()
    s1, s2, fits = _case_study_fits()
    threads = default_threads()
    lines, ok = [], True
    for eps, want, p_ref in DECISIONS:
        ps, decisions = [], []
        for seed in SEED_SWEEP:
            cfg = TestConfig(eps, 0.05, 300, CASE_GRID, seed=seed, threads=threads)
            r = similarity_test(s1, s2, casestudy.SPECS, casestudy.SPECS, cfg, mle=fits)
            ps.append(r.p_value)
            decisions.append(r.reject)
        mean_p = float(np.mean(ps))
        ok &= all(d == want for d in decisions) and abs(mean_p - p_ref) <= P_TOL
        lines.append(f"eps={eps:g}: reject={decisions} p={[round(p, 4) for p in ps]} "
                     f"mean {mean_p:.4f} vs {p_ref} (+/-{P_TOL})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1800
    report(capsys, 2, ok, "; ".join(lines) + f"; {elapsed:.0f}s")


def _rate_detail(oc):
    return f"{oc.scenario}: {oc.rate:.3f} (se {oc.se:.3f}, R={oc.n_replicates}) vs {oc.reference}"


@pytest.mark.slow
def test_criterion_3_type1_error(capsys):
    t0 = time.perf_counter()
    cells = (find_scenario("table1", epsilon=0.2, d=(0.2, 0.2), n_g=50, rho=0.2),
             find_scenario("table2", epsilon=0.2, d=(0.0, 0.2), n_g=7, sigma2=0.1))
    assert [c.reference for c in cells] == [0.009, 0.104]
    ocs = [run_scenario(c, threads=default_threads()) for c in cells]
    ok = all(oc.within(3.0) for oc in ocs)
    report(capsys, 3, ok, "; ".join(_rate_detail(oc) for oc in ocs)
           + f"; {time.perf_counter() - t0:.0f}s")


@pytest.mark.slow
def test_criterion_4_power(capsys):
    t0 = time.perf_counter()
    cells = [find_scenario("power-binary", epsilon=0.2, d=(0.0, 0.0), n_g=n, rho=0.2) for n in GROUP_SIZES]
    ocs = [run_scenario(c, threads=default_threads()) for c in cells]
    at50 = ocs[GROUP_SIZES.index(50)]
    rates = [oc.rate for oc in ocs]
    monotone = all(a <= b for a, b in zip(rates, rates[1:]))
    ok = at50.reference == 0.919 and at50.within(3.0) and monotone
    report(capsys, 4, ok, _rate_detail(at50) + f"; power by n_g {dict(zip(GROUP_SIZES, rates))}"
           + f" monotone={monotone}; {time.perf_counter() - t0:.0f}s")


def test_criterion_5_numerics(capsys, mixed_pair, binbin_pair, cont_pair):
    rng = np.random.default_rng(2024)
    a, b = rng.uniform(-5, 5, 300), rng.uniform(-5, 5, 300)
    r = rng.uniform(-0.99, 0.99, 300)
    ident = 0.0
    for ai, bi, ri in zip(a, b, r):
        pi = bvn_cdf(ai, bi, ri)
        ident = max(ident,
                    abs(bvn_cdf(0.0, 0.0, ri) - (0.25 + math.asin(ri) / (2 * math.pi))),
                    abs(pi - bvn_cdf(bi, ai, ri)),
                    abs(pi + bvn_cdf(ai, -bi, -ri) - normal_cdf(ai)),
                    abs(bvn_cdf(ai, bi, 0.0) - normal_cdf(ai) * normal_cdf(bi)))
    # copula density over the unit square, integrated on the normal scale
    x = np.linspace(-9, 9, 3001)
    h = x[1] - x[0]
    X, Y = np.meshgrid(x, x, indexing="ij")
    U, V = normal_cdf(X), normal_cdf(Y)
    inside = (U > 0) & (U < 1) & (V > 0) & (V < 1)
    pdf = stats.norm.pdf(x)
    w = pdf[:, None] * pdf[None, :]
    integ = 0.0
    for rr in (-0.8, 0.0, 0.5, 0.95):
        c = np.zeros_like(X)
        c[inside] = copula_density(U[inside], V[inside], rr)
        integ = max(integ, abs(float(np.sum(c * w) * h * h) - 1.0))
    hf = 0.0
    for u, v, rr in ((0.3, 0.6, 0.5), (0.05, 0.9, -0.7), (0.8, 0.2, 0.95), (0.5, 0.5, 0.0)):
        fd = (copula_cdf(u, v + 1e-5, rr) - copula_cdf(u, v - 1e-5, rr)) / 2e-5
        hf = max(hf, abs(copula_hfunc(u, v, rr) - fd))
    # rho = 0 decomposition
    dec = 0.0
    s, _, sp = mixed_pair
    q = ParamVector(((0.3, 0.7, -0.3), (-2.4, 1.7)), (0.2, None), 0.0)
    ref = (stats.norm.logpdf(s.y1, eval_curve(sp[0], q.coef[0], s.dose), 0.2).sum()
           + stats.bernoulli.logpmf(s.y2, eval_curve(sp[1], q.coef[1], s.dose)).sum())
    dec = max(dec, abs(loglik_mixed(s, sp, q) / ref - 1))
    s, _, sp = binbin_pair
    q = ParamVector(((-1.1, 2.1), (-2.9, 3.1)), (None, None), 0.0)
    ref = sum(stats.bernoulli.logpmf(y, eval_curve(m, c, s.dose)).sum()
              for y, m, c in zip((s.y1, s.y2), sp, q.coef))
    dec = max(dec, abs(loglik_bin_bin(s, sp, q) / ref - 1))
    s, _, sp = cont_pair
    q = ParamVector(((0.1, 0.9), (0.0, 1.1)), (0.35, 0.25), 0.0)
    ref = sum(stats.norm.logpdf(y, eval_curve(m, c, s.dose), sd).sum()
              for y, m, c, sd in zip((s.y1, s.y2), sp, q.coef, (0.35, 0.25)))
    dec = max(dec, abs(loglik_cont_cont(s, sp, q) / ref - 1))
    # kernel gradient vs an independent wider-step difference of the objective
    grad = 0.0
    from copulasim.estimation import default_start
    for s, _, sp in (mixed_pair, binbin_pair, cont_pair):
        obj = Objective(s, sp)
        z = transform_params(default_start(s, sp)) + 0.15
        g1 = obj.grad(z)
        g2 = finite_diff_gradient(obj.value, z, h=1e-4)
        grad = max(grad, float(np.max(np.abs(g1 - g2)) / np.max(np.abs(g1))))
    ok = ident <= 1e-9 and integ <= 1e-4 and hf <= 1e-6 and dec <= 1e-12 and grad <= 1e-4
    report(capsys, 5, ok, f"bvn identities {ident:.1e} (1e-9); density integral {integ:.1e} (1e-4); "
                          f"h-function {hf:.1e} (1e-6); rho=0 decomposition rel {dec:.1e}; "
                          f"gradient rel {grad:.1e} (1e-4)")


def _big_sample(specs, params, n=10_000):
    doses = (0.0, 0.25, 0.5, 1.0, 1.5, 2.0)
    return simulate_group(GroupGenSpec(specs, params, doses, (n // len(doses) + 1,)), RngStream(10))


def test_criterion_6_estimators(capsys, mixed_pair, binbin_pair, cont_pair):
    truths = (
        (mixed_pair[2], ParamVector(((0.3, 0.7, -0.3), (-2.4, 1.7)), (0.2, None), 0.3)),
        (binbin_pair[2], ParamVector(((-1.0, 2.0), (-3.0, 3.0)), (None, None), 0.3)),
        (cont_pair[2], ParamVector(((0.0, 1.0), (0.2, -0.5)), (0.3, 0.5), -0.4)),
    )
    rec = 0.0
    for specs, truth in truths:
        fit = fit_mle(_big_sample(specs, truth), specs)
        rec = max(rec, float(np.max(np.abs(np.concatenate(fit.params.coef) - np.concatenate(truth.coef))))
                  if fit.ok else np.inf)
    resid, ll_ok, passthrough = 0.0, True, True
    for s1, s2, specs in (mixed_pair, binbin_pair, cont_pair):
        fits = (fit_mle(s1, specs), fit_mle(s2, specs))
        grid = DoseGrid.linspace(min(s1.dose.min(), s2.dose.min()), max(s1.dose.max(), s2.dose.max()), 101)
        d_hat = curve_distances(specs, fits[0].params, specs, fits[1].params, grid).d_max
        for eps in (d_hat * 1.5, d_hat * 2.5):
            c = fit_constrained(s1, s2, specs, specs, eps, grid, fits)
            resid = max(resid, abs(c.d_max - eps) if c.ok else np.inf)
            ll_ok &= c.loglik <= fits[0].loglik + fits[1].loglik
        c = fit_constrained(s1, s2, specs, specs, d_hat * 0.9, grid, fits)
        passthrough &= (c.status == PASSTHROUGH and c.params[0] is fits[0].params
                        and c.params[1] is fits[1].params)
    ok = rec <= 0.05 and resid <= 1e-4 and ll_ok and passthrough
    report(capsys, 6, ok, f"n=10000 coefficient recovery {rec:.3f} (0.05); |d_max-eps| {resid:.1e} (1e-4); "
                          f"constrained loglik <= MLE: {ll_ok}; passthrough exact: {passthrough}")


def _draw(stream):
    return sample_correlated_binary(0.3, 0.6, 0.2, 1000, RngStream(5, stream)).tobytes()


def test_criterion_7_generators(capsys):
    n = 100_000
    y = sample_correlated_binary(0.3, 0.6, 0.2, n, RngStream(1))
    mom = max(abs(y[:, 0].mean() - 0.3), abs(y[:, 1].mean() - 0.6))
    cor = abs(np.corrcoef(y.T)[0, 1] - 0.2)
    m = sample_mixed(0.3, 1.0, 2.0, 0.25, n, RngStream(2))
    pb = abs(np.corrcoef(m.T)[0, 1] - 0.25)
    ep = abs(ep_latent_correlation(0.5, 0.5, 0.3) - math.sin(0.15 * math.pi))
    serial = [_draw(s) for s in range(8)]
    with ThreadPoolExecutor(4) as ex:
        threaded = list(ex.map(_draw, range(8)))
    repro = serial == threaded and serial == [_draw(s) for s in range(8)]
    ok = mom <= 0.005 and cor <= 0.01 and pb <= 0.01 and ep <= 1e-6 and repro
    report(capsys, 7, ok, f"binary means {mom:.4f} (0.005), phi {cor:.4f} (0.01); point-biserial {pb:.4f} "
                          f"(0.01); EP p=0.5 {ep:.1e} (1e-6); byte-identical across runs/threads: {repro}")
