"""Similarity test with a constrained parametric bootstrap, and the IUT baseline."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os
from typing import Sequence

import numpy as np

from .datagen import BOOTSTRAP, GroupGenSpec, RngStream, simulate_group
from .estimation import (
    DEFAULT_SETTINGS,
    ConstrainedFit,
    FitError,
    JointFit,
    OptimizerSettings,
    fit_constrained,
    fit_mle,
)
from .likelihood import GroupSample
from .model import DistanceResult, DoseGrid, ParamVector, curve_distances

DEFAULT_SEED = 1
SEED_SWEEP = (1, 2, 3, 4, 5)
MAX_FAIL_FRACTION = 0.02


class BootstrapError(RuntimeError):
    """Too many bootstrap refits failed."""


class ReplicateFailure(RuntimeError):
    """A single bootstrap refit did not converge."""


@dataclass(frozen=True)
class TestConfig:
    epsilon: float
    alpha: float = 0.05
    n_boot: int = 300
    grid: DoseGrid | None = None
    grid_points: int = 101
    seed: int = DEFAULT_SEED
    settings: OptimizerSettings = DEFAULT_SETTINGS
    threads: int = 1

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.n_boot < 1 or math.floor(self.n_boot * self.alpha) < 1:
            raise ValueError("n_boot * alpha must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be positive")

    def grid_for(self, *samples: GroupSample) -> DoseGrid:
        if self.grid is not None:
            return self.grid
        lo = min(float(s.dose.min()) for s in samples)
        hi = max(float(s.dose.max()) for s in samples)
        return DoseGrid.linspace(lo, hi, self.grid_points)


@dataclass
class TestResult:
    """Outcome of one run of the bootstrap similarity test.

    ``reject`` follows the order-statistic rule ``d_hat_max < critical_value``;
    the p-value is reported alongside.
    """

    epsilon: float
    alpha: float
    distances: DistanceResult
    mle: tuple
    constrained: ConstrainedFit
    bootstrap: np.ndarray = field(repr=False)
    critical_value: float
    p_value: float
    reject: bool
    n_failed: int
    outcomes: tuple

    __test__ = False

    @property
    def d_hat_max(self) -> float:
        return self.distances.d_max

    @property
    def quantile_index(self) -> int:
        return math.floor(self.bootstrap.size * self.alpha)

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "alpha": self.alpha,
            "outcomes": [k + 1 for k in self.outcomes],
            "d_hat": self.distances.as_dict(),
            "d_hat_max": self.d_hat_max,
            "critical_value": self.critical_value,
            "quantile_index": self.quantile_index,
            "p_value": self.p_value,
            "decision": "reject H0 (similar)" if self.reject else "fail to reject H0",
            "reject": bool(self.reject),
            "n_boot": int(self.bootstrap.size + self.n_failed),
            "n_failed": int(self.n_failed),
            "constrained_fit": {
                "branch": self.constrained.branch,
                "status": self.constrained.status,
                "residual": self.constrained.residual,
                "d_max": self.constrained.d_max,
                "loglik": self.constrained.loglik,
                "outer_iterations": self.constrained.n_outer,
                "params": [p.to_array().tolist() for p in self.constrained.params],
            },
            "bootstrap": self.bootstrap.tolist(),
        }


def quantile_decision(boot: np.ndarray, d_hat: float, alpha: float) -> tuple:
    """(critical value, p-value, reject) from the bootstrap sample."""
    b = np.sort(np.asarray(boot, dtype=float))
    k = math.floor(b.size * alpha)
    if k < 1:
        raise ValueError("too few bootstrap replicates for this alpha")
    crit = float(b[k - 1])
    p = float(np.mean(b <= d_hat))
    return crit, p, bool(d_hat < crit)


def bootstrap_replicate(theta_null: Sequence[ParamVector], layouts, rng: RngStream, specs,
                        grid: DoseGrid, outcomes=None, settings: OptimizerSettings = DEFAULT_SETTINGS
                        ) -> float:
    """One generate-and-refit cycle under the null parameters.

    ``layouts`` holds ``(doses, counts)`` per group; ``specs`` the two
    groups' margin pairs. Raises :class:`ReplicateFailure` if a refit does
    not converge.
    """
    fits = []
    for g, (theta, (doses, counts), sp) in enumerate(zip(theta_null, layouts, specs)):
        gen = GroupGenSpec(sp, theta, tuple(doses), tuple(counts), rho_scale="latent")
        sample = simulate_group(gen, RngStream(rng.seed, rng.stream, g + 1, BOOTSTRAP))
        fit = fit_mle(sample, sp, init=theta, settings=settings)
        if not fit.ok:
            raise ReplicateFailure(f"group {g + 1} refit: {fit.status}")
        fits.append(fit)
    return curve_distances(specs[0], fits[0].params, specs[1], fits[1].params, grid, outcomes).d_max


def _fit_pair(sample1, sample2, specs1, specs2, settings) -> tuple:
    fits = (fit_mle(sample1, specs1, settings=settings), fit_mle(sample2, specs2, settings=settings))
    for g, f in enumerate(fits):
        if not f.ok:
            raise FitError(f"MLE for group {g + 1} did not converge ({f.status}, |grad|={f.grad_norm:.2e})")
    return fits


def run_bootstrap(theta_null, layouts, specs, grid, outcomes, cfg: TestConfig) -> tuple:
    """All replicates; returns (sorted values, failure count)."""
    def one(b):
        try:
            return bootstrap_replicate(theta_null, layouts, RngStream(cfg.seed, b, 0, BOOTSTRAP),
                                       specs, grid, outcomes, cfg.settings)
        except (ReplicateFailure, FloatingPointError, ValueError):
            return None

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            vals = list(ex.map(one, range(cfg.n_boot)))
    else:
        vals = [one(b) for b in range(cfg.n_boot)]
    ok = np.sort(np.array([v for v in vals if v is not None], dtype=float))
    n_failed = cfg.n_boot - ok.size
    if n_failed > MAX_FAIL_FRACTION * cfg.n_boot:
        raise BootstrapError(f"{n_failed} of {cfg.n_boot} bootstrap refits failed")
    return ok, n_failed


def similarity_test(sample1: GroupSample, sample2: GroupSample, specs1, specs2, cfg: TestConfig,
                    outcomes: Sequence[int] | None = None, mle: tuple | None = None) -> TestResult:
    """Test H0: d_max >= eps against H1: d_max < eps.

    ``outcomes`` restricts the statistic (and the null constraint) to a
    subset of outcomes; the IUT baseline uses one outcome at a time.
    ``mle`` may carry precomputed group fits.
    """
    specs1, specs2 = tuple(specs1), tuple(specs2)
    ks = tuple(range(len(specs1))) if outcomes is None else tuple(outcomes)
    grid = cfg.grid_for(sample1, sample2)
    fits = mle if mle is not None else _fit_pair(sample1, sample2, specs1, specs2, cfg.settings)
    dist = curve_distances(specs1, fits[0].params, specs2, fits[1].params, grid, ks)
    cons = fit_constrained(sample1, sample2, specs1, specs2, cfg.epsilon, grid, fits, ks, cfg.settings)
    if not cons.ok:
        raise FitError(f"constrained fit failed (residual {cons.residual:.2e})")
    layouts = (sample1.layout(), sample2.layout())
    boot, n_failed = run_bootstrap(cons.params, layouts, (specs1, specs2), grid, ks, cfg)
    crit, p, reject = quantile_decision(boot, dist.d_max, cfg.alpha)
    return TestResult(cfg.epsilon, cfg.alpha, dist, tuple(fits), cons, boot, crit, p, reject,
                      n_failed, ks)


@dataclass
class IUTResult:
    results: tuple
    reject: bool

    def as_dict(self) -> dict:
        return {"reject": self.reject, "per_outcome": [r.as_dict() for r in self.results]}


def iut_test(sample1: GroupSample, sample2: GroupSample, specs1, specs2, epsilons: Sequence[float],
             cfg: TestConfig) -> IUTResult:
    """Intersection-union test: one single-outcome test per outcome, reject iff all reject."""
    specs1, specs2 = tuple(specs1), tuple(specs2)
    if len(epsilons) != len(specs1):
        raise ValueError("need one threshold per outcome")
    fits = _fit_pair(sample1, sample2, specs1, specs2, cfg.settings)
    results = []
    for k, eps in enumerate(epsilons):
        sub = TestConfig(eps, cfg.alpha, cfg.n_boot, cfg.grid, cfg.grid_points, cfg.seed,
                         cfg.settings, cfg.threads)
        results.append(similarity_test(sample1, sample2, specs1, specs2, sub, outcomes=(k,), mle=fits))
    return IUTResult(tuple(results), all(r.reject for r in results))


def default_threads() -> int:
    return os.cpu_count() or 1
