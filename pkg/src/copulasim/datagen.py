"""Correlated bivariate outcome generators and per-dose group simulation.

Binary pairs use a latent-threshold construction: the latent normal
correlation is solved from the target phi coefficient. Mixed pairs use the
point-biserial adjustment: a latent normal pair is drawn with correlation
scaled by sqrt(p q) / phi(Phi^{-1}(p)) and the first coordinate is
dichotomised.

Randomness comes from Philox (a counter-based generator) keyed by
``(seed, domain, stream, substream)``, so any draw is reproducible no matter
in which order or on which thread it is requested.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Sequence

import numpy as np
from scipy import optimize

from .likelihood import BINARY, CONTINUOUS, GroupSample
from .model import MarginSpec, ParamVector, eval_curve
from .numerics import bvn_cdf, normal_pdf, normal_quantile

DATA, BOOTSTRAP, SIMULATION = 0, 1, 2


class InfeasibleCorrelation(ValueError):
    """Target correlation cannot be attained for the given margins."""


@dataclass(frozen=True)
class RngStream:
    """Address of an independent random stream."""

    seed: int
    stream: int = 0
    substream: int = 0
    domain: int = DATA

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed),
                                    spawn_key=(int(self.domain), int(self.stream), int(self.substream)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, substream: int) -> "RngStream":
        return RngStream(self.seed, self.stream, substream, self.domain)


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def _check_prob(p, name):
    if not 0.0 < p < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {p}")


def phi_bounds(p1: float, p2: float) -> tuple:
    """Feasible range of the phi coefficient between two Bernoulli variables."""
    q1, q2 = 1.0 - p1, 1.0 - p2
    s = math.sqrt(p1 * q1 * p2 * q2)
    return (max(0.0, p1 + p2 - 1.0) - p1 * p2) / s, (min(p1, p2) - p1 * p2) / s


def ep_latent_correlation(p1: float, p2: float, rho_target: float) -> float:
    """Latent normal correlation giving binary correlation ``rho_target``."""
    _check_prob(p1, "p1")
    _check_prob(p2, "p2")
    lo, hi = phi_bounds(p1, p2)
    if not lo < rho_target < hi:
        raise InfeasibleCorrelation(
            f"binary correlation {rho_target} infeasible for p=({p1}, {p2}); "
            f"feasible range is ({lo:.6f}, {hi:.6f})")
    if rho_target == 0.0:
        return 0.0
    a, b = normal_quantile(p1), normal_quantile(p2)
    target = rho_target * math.sqrt(p1 * (1 - p1) * p2 * (1 - p2)) + p1 * p2
    r_edge = 1.0 - 1e-15
    return optimize.brentq(lambda r: bvn_cdf(a, b, r) - target, -r_edge, r_edge,
                           xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)


def binary_correlation(p1: float, p2: float, rho_latent: float) -> float:
    """Phi coefficient induced by latent correlation ``rho_latent`` (inverse of the above)."""
    p11 = bvn_cdf(normal_quantile(p1), normal_quantile(p2), rho_latent)
    return (p11 - p1 * p2) / math.sqrt(p1 * (1 - p1) * p2 * (1 - p2))


def pb_latent_correlation(p1: float, rho_target: float) -> float:
    """Latent correlation for a target point-biserial correlation."""
    _check_prob(p1, "p1")
    scale = math.sqrt(p1 * (1 - p1)) / normal_pdf(normal_quantile(p1))
    bound = 1.0 / scale
    if not abs(rho_target) < bound:
        raise InfeasibleCorrelation(
            f"point-biserial correlation {rho_target} infeasible for p={p1}; |rho| must be < {bound:.6f}")
    return rho_target * scale


def _latent_pairs(rho: float, n: int, gen: np.random.Generator) -> np.ndarray:
    z = gen.standard_normal((n, 2))
    z[:, 1] = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
    return z


def _binary_from_latent(p1, p2, rho_lat, n, gen):
    z = _latent_pairs(rho_lat, n, gen)
    y = np.empty((n, 2), dtype=np.int64)
    y[:, 0] = z[:, 0] <= normal_quantile(p1)
    y[:, 1] = z[:, 1] <= normal_quantile(p2)
    return y


def _mixed_from_latent(p1, mu2, sigma2, rho_lat, n, gen):
    z = _latent_pairs(rho_lat, n, gen)
    out = np.empty((n, 2))
    # success when the latent value exceeds Phi^{-1}(1 - p1); positive latent
    # correlation then means positive point-biserial correlation
    out[:, 0] = z[:, 0] > normal_quantile(1.0 - p1)
    out[:, 1] = mu2 + sigma2 * z[:, 1]
    return out


def sample_correlated_binary(p1: float, p2: float, rho: float, n: int, rng) -> np.ndarray:
    """``n`` pairs in {0, 1}^2 with success probabilities (p1, p2) and phi coefficient ``rho``."""
    rho_lat = ep_latent_correlation(p1, p2, rho)
    return _binary_from_latent(p1, p2, rho_lat, n, _gen(rng))


def sample_bivariate_normal(mu1, mu2, sigma1, sigma2, rho, n, rng) -> np.ndarray:
    if not (sigma1 > 0 and sigma2 > 0):
        raise ValueError("standard deviations must be positive")
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    z = _latent_pairs(rho, n, _gen(rng))
    return np.column_stack([mu1 + sigma1 * z[:, 0], mu2 + sigma2 * z[:, 1]])


def sample_mixed(p1: float, mu2: float, sigma2: float, rho: float, n: int, rng) -> np.ndarray:
    """``n`` (binary, continuous) pairs with point-biserial correlation ``rho``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    rho_lat = pb_latent_correlation(p1, rho)
    return _mixed_from_latent(p1, mu2, sigma2, rho_lat, n, _gen(rng))


def mixed_correlation(p1: float, rho_latent: float) -> float:
    """Point-biserial correlation induced by a latent correlation."""
    return rho_latent * normal_pdf(normal_quantile(p1)) / math.sqrt(p1 * (1 - p1))


# --- group simulation -------------------------------------------------------

SIMULATION_DOSES = (0.0, 0.1, 0.2, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class GroupGenSpec:
    """Generative description of one group.

    ``rho_scale`` says how ``params.rho`` is read: ``"observed"`` treats it
    as the correlation of the observable pair within each dose group (binary
    phi coefficient, point-biserial, or Pearson); ``"latent"`` treats it as
    the Gaussian-copula parameter.
    """

    specs: tuple
    params: ParamVector
    doses: tuple = SIMULATION_DOSES
    sizes: tuple = (50,)
    rho_scale: str = "latent"

    def __post_init__(self):
        if self.rho_scale not in ("latent", "observed"):
            raise ValueError("rho_scale must be 'latent' or 'observed'")
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) == 1:
            sizes = sizes * len(self.doses)
        if len(sizes) != len(self.doses) or min(sizes) < 1:
            raise ValueError("need one positive size per dose")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "doses", tuple(float(d) for d in self.doses))
        object.__setattr__(self, "specs", tuple(self.specs))

    @property
    def kinds(self) -> tuple:
        return tuple(BINARY if s.is_binary else CONTINUOUS for s in self.specs)


def _dose_block(spec: GroupGenSpec, x: float, n: int, gen) -> np.ndarray:
    s1, s2 = spec.specs
    p = spec.params
    m1 = float(eval_curve(s1, p.coef[0], x))
    m2 = float(eval_curve(s2, p.coef[1], x))
    rho = p.rho
    latent = spec.rho_scale == "latent"
    for s, m in ((s1, m1), (s2, m2)):
        if s.is_binary and not 0.0 < m < 1.0:
            raise ValueError(f"success probability {m} at dose {x} is outside (0, 1)")
    if s1.is_binary and s2.is_binary:
        r = rho if latent else ep_latent_correlation(m1, m2, rho)
        return _binary_from_latent(m1, m2, r, n, gen).astype(float)
    if not s1.is_binary and not s2.is_binary:
        z = _latent_pairs(rho, n, gen)
        return np.column_stack([m1 + p.sigma[0] * z[:, 0], m2 + p.sigma[1] * z[:, 1]])
    if s1.is_binary:
        r = rho if latent else pb_latent_correlation(m1, rho)
        return _mixed_from_latent(m1, m2, p.sigma[1], r, n, gen)
    r = rho if latent else pb_latent_correlation(m2, rho)
    return _mixed_from_latent(m2, m1, p.sigma[0], r, n, gen)[:, ::-1]


def simulate_group(spec: GroupGenSpec, rng: RngStream) -> GroupSample:
    """Draw each dose group separately (substream = dose index) and stack them."""
    blocks, doses = [], []
    for g, (x, n) in enumerate(zip(spec.doses, spec.sizes)):
        blocks.append(_dose_block(spec, x, n, rng.child(rng.substream * 1000 + g).generator()))
        doses.append(np.full(n, x))
    y = np.vstack(blocks)
    return GroupSample(np.concatenate(doses), y[:, 0], y[:, 1], spec.kinds)
