"""Dental-pain case study: design, published estimates and a calibrated surrogate dataset.

The original patient-level data are not distributed with this package. A
surrogate with the same design (30 patients at each of five doses per
product) is drawn from the published coefficient estimates and then
calibrated so that refitting it returns those estimates.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .datagen import DATA, GroupGenSpec, RngStream, simulate_group
from .dataio import parse_dataset
from .estimation import FitError, OptimizerSettings, fit_mle
from .likelihood import BINARY, CONTINUOUS, GroupSample
from .model import ParamVector, bernoulli, eval_curve, gaussian

# group 1 = marketed product, group 2 = new product
MARKETED_DOSES = (0.0, 0.1, 0.3, 0.6, 1.0)
NEW_DOSES = (0.0, 0.05, 0.2, 0.5, 1.0)
GROUP_SIZE = 30

SPECS = (gaussian("quadratic"), bernoulli("logit", "linear"))
KINDS = (CONTINUOUS, BINARY)

# efficacy (intercept, dose, dose^2), toxicity (intercept, dose)
PUBLISHED_COEF = (
    ((0.303, 0.715, -0.369), (-2.492, 1.797)),
    ((0.259, 0.416, 0.062), (-2.136, 1.263)),
)

SURROGATE_SIGMA = 0.18
SURROGATE_RHO = 0.2
SURROGATE_SEED = 7
SURROGATE_SEEDS = (236, 260)

DATA_FILE = "case_study.csv"

_TIGHT = OptimizerSettings(mle_gtol=1e-8, newton_steps=20)


def published_params(sigma: float = SURROGATE_SIGMA, rho: float = SURROGATE_RHO) -> tuple:
    return tuple(ParamVector(c, (sigma, None), rho) for c in PUBLISHED_COEF)


def generative_specs(sigma: float = SURROGATE_SIGMA, rho: float = SURROGATE_RHO,
                     n: int = GROUP_SIZE) -> tuple:
    p1, p2 = published_params(sigma, rho)
    return (GroupGenSpec(SPECS, p1, MARKETED_DOSES, (n,)),
            GroupGenSpec(SPECS, p2, NEW_DOSES, (n,)))


def simulate_case_study(seed: int = SURROGATE_SEED, sigma: float = SURROGATE_SIGMA,
                        rho: float = SURROGATE_RHO, n: int = GROUP_SIZE) -> tuple:
    g1, g2 = generative_specs(sigma, rho, n)
    return (simulate_group(g1, RngStream(seed, 0, 1, DATA)),
            simulate_group(g2, RngStream(seed, 0, 2, DATA)))


def _coef_vector(p: ParamVector) -> np.ndarray:
    return np.concatenate(p.coef)


def _logistic_fits(doses, events, n, iters: int = 30) -> np.ndarray:
    """Grouped logistic regressions on (1, dose), one per row of ``events``, by Newton's method."""
    X = np.column_stack([np.ones_like(doses), doses])
    E = np.atleast_2d(events).astype(float)
    b = np.zeros((E.shape[0], 2))
    for _ in range(iters):
        m = 1.0 / (1.0 + np.exp(-b @ X.T))
        w = n * m * (1.0 - m)
        H = np.einsum("ci,ij,ik->cjk", w, X, X)
        g = (E - n * m) @ X
        b += np.linalg.solve(H, g[..., None])[..., 0]
    return b


def _search_counts(doses, n, target, radius: int = 3) -> np.ndarray:
    """Per-dose event counts whose logistic fit is closest to ``target``.

    Exhaustive over counts within ``radius`` of the expected counts.
    """
    m = 1.0 / (1.0 + np.exp(-(target[0] + target[1] * doses)))
    centre = np.rint(n * m).astype(int)
    offsets = np.stack(np.meshgrid(*[np.arange(-radius, radius + 1)] * doses.size, indexing="ij"),
                       axis=-1).reshape(-1, doses.size)
    cand = centre + offsets
    cand = cand[np.all((cand > 0) & (cand < n), axis=1)]
    err = np.sum((_logistic_fits(doses, cand, n) - target) ** 2, axis=1)
    return cand[int(np.argmin(err))]


def _set_counts(sample: GroupSample, want) -> GroupSample:
    """Flip binary values, in row order, until each dose has ``want`` events."""
    doses, idx = np.unique(sample.dose, return_inverse=True)
    y2 = sample.y2.copy()
    for g in range(doses.size):
        rows = np.flatnonzero(idx == g)
        delta = int(want[g] - y2[rows].sum())
        if delta > 0:
            y2[[r for r in rows if y2[r] == 0.0][:delta]] = 1.0
        elif delta < 0:
            y2[[r for r in rows if y2[r] == 1.0][:-delta]] = 0.0
    return GroupSample(sample.dose, sample.y1, y2, sample.kinds)


def _toxicity_fit(sample: GroupSample, init=None):
    f = fit_mle(sample, SPECS, init=init, settings=_TIGHT)
    if not f.ok:
        raise FitError("calibration refit did not converge")
    return f


def _match_toxicity(sample: GroupSample, target: np.ndarray) -> GroupSample:
    """Set per-dose event counts so the joint-fit toxicity coefficients approach ``target``.

    Counts are searched on the marginal logistic fit, with the goal shifted
    by the gap between joint and marginal estimates observed on the
    previous pass.
    """
    doses, idx = np.unique(sample.dose, return_inverse=True)
    n = np.bincount(idx).astype(float)
    goal = target.copy()
    best, best_err = sample, np.inf
    for _ in range(3):
        cand = _set_counts(sample, _search_counts(doses, n, goal))
        joint = _toxicity_fit(cand).params.coef[1]
        err = float(np.max(np.abs(joint - target)))
        if err < best_err:
            best, best_err = cand, err
        goal = goal - (joint - target)
    return best


def _shift_efficacy(sample: GroupSample, coef) -> GroupSample:
    """Add the gap between the target and fitted efficacy curves to the efficacy values."""
    spec = SPECS[0]
    for _ in range(3):
        fit = _toxicity_fit(sample)
        shift = eval_curve(spec, coef, sample.dose) - eval_curve(spec, fit.params.coef[0], sample.dose)
        sample = GroupSample(sample.dose, sample.y1 + shift, sample.y2, sample.kinds)
    return sample


def calibrate_group(sample: GroupSample, coef) -> tuple:
    """Adjust a mixed (efficacy, toxicity) sample towards MLE coefficients ``coef``.

    Returns ``(sample, max abs coefficient error)``. Efficacy is matched
    exactly; toxicity only up to the granularity of binary data.
    """
    target = np.concatenate([np.asarray(c, float) for c in coef])
    sample = _shift_efficacy(_match_toxicity(sample, target[3:]), target[:3])
    err = float(np.max(np.abs(_coef_vector(_toxicity_fit(sample).params) - target)))
    return sample, err


def search_surrogate(group: int, seeds, sigma: float = SURROGATE_SIGMA, rho: float = SURROGATE_RHO
                     ) -> tuple:
    """Calibrate one group's draw for every seed; return ``(best seed, sample, error)``."""
    gen = generative_specs(sigma, rho)[group - 1]
    best = (None, None, np.inf)
    for seed in seeds:
        raw = simulate_group(gen, RngStream(seed, 0, group, DATA))
        try:
            sample, err = calibrate_group(raw, PUBLISHED_COEF[group - 1])
        except FitError:
            continue
        if err < best[2]:
            best = (seed, sample, err)
    return best


def calibrated_case_study(seeds=SURROGATE_SEEDS, sigma: float = SURROGATE_SIGMA,
                          rho: float = SURROGATE_RHO) -> tuple:
    """The calibrated surrogate: group ``l`` is drawn with ``seeds[l - 1]``."""
    out = []
    for g, seed in enumerate(seeds, start=1):
        raw = simulate_group(generative_specs(sigma, rho)[g - 1], RngStream(seed, 0, g, DATA))
        out.append(calibrate_group(raw, PUBLISHED_COEF[g - 1])[0])
    return tuple(out)


def load_case_study() -> tuple:
    """The bundled surrogate dataset as ``(marketed, new)``."""
    text = resources.files("copulasim.data").joinpath(DATA_FILE).read_text()
    return parse_dataset(text, KINDS, source=DATA_FILE)


def dose_zero_toxicity(group: int) -> float:
    """Published-model probability of a side effect at dose 0."""
    return float(eval_curve(SPECS[1], PUBLISHED_COEF[group - 1][1], 0.0))
