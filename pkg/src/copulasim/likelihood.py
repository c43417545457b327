"""Joint log-likelihoods of one group's bivariate sample under a Gaussian copula.

Three cases are covered: both outcomes binary, both continuous (gaussian
margins), and one of each. Probabilities entering a logarithm are clamped at
``1e-12``; the number of clamped terms is reported so fits can surface it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .model import MarginSpec, ParamVector, eval_curve, transform_params
from .numerics import bvn_cdf, normal_quantile

BINARY = "binary"
CONTINUOUS = "continuous"


class SeparationError(ValueError):
    """A binary margin puts probability exactly 0 or 1 on some dose."""


@dataclass(frozen=True)
class GroupSample:
    """Dose column plus two outcome columns for one group."""

    dose: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    kinds: tuple = (CONTINUOUS, CONTINUOUS)

    def __post_init__(self):
        dose = np.ascontiguousarray(self.dose, dtype=float)
        y1 = np.ascontiguousarray(self.y1, dtype=float)
        y2 = np.ascontiguousarray(self.y2, dtype=float)
        if not (dose.ndim == y1.ndim == y2.ndim == 1) or not (dose.size == y1.size == y2.size):
            raise ValueError("dose, y1 and y2 must be 1-d arrays of equal length")
        if dose.size == 0:
            raise ValueError("a group sample needs at least one row")
        if not np.all(np.isfinite(dose)):
            raise ValueError("dose values must be finite")
        kinds = tuple(self.kinds)
        for kind, y, name in zip(kinds, (y1, y2), ("y1", "y2")):
            if kind == BINARY:
                if not np.all((y == 0.0) | (y == 1.0)):
                    raise ValueError(f"binary column {name} may only contain 0 and 1")
            elif kind == CONTINUOUS:
                if not np.all(np.isfinite(y)):
                    raise ValueError(f"continuous column {name} must be finite")
            else:
                raise ValueError(f"unknown outcome kind {kind!r}")
        object.__setattr__(self, "dose", dose)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "kinds", kinds)

    def __len__(self) -> int:
        return self.dose.size

    @property
    def outcomes(self) -> tuple:
        return (self.y1, self.y2)

    def layout(self) -> tuple:
        """Sorted distinct doses and the number of rows at each."""
        doses, counts = np.unique(self.dose, return_counts=True)
        return doses, counts

    def permuted(self, order) -> "GroupSample":
        order = np.asarray(order)
        return GroupSample(self.dose[order], self.y1[order], self.y2[order], self.kinds)


def check_specs(sample: GroupSample, specs: Sequence[MarginSpec]):
    if len(specs) != 2:
        raise ValueError("exactly two margins are supported")
    for kind, spec in zip(sample.kinds, specs):
        if (kind == BINARY) != spec.is_binary:
            raise ValueError(f"outcome kind {kind} does not match margin {spec}")


class Objective:
    """Kernel-ready view of a sample: log-likelihood and gradient on the
    unconstrained scale. Binary-binary samples are collapsed to distinct
    (dose, y1, y2) cells with counts as weights.
    """

    def __init__(self, sample: GroupSample, specs: Sequence[MarginSpec]):
        check_specs(sample, specs)
        self.specs = tuple(specs)
        self.n = len(sample)
        x, y1, y2 = sample.dose, sample.y1, sample.y2
        if specs[0].is_binary and specs[1].is_binary:
            cells = np.stack([x, y1, y2], axis=1)
            uniq, w = np.unique(cells, axis=0, return_counts=True)
            x, y1, y2 = (np.ascontiguousarray(uniq[:, j]) for j in range(3))
            w = w.astype(float)
        else:
            w = np.ones(x.size)
        self.x, self.y1, self.y2, self.w = x, y1, y2, w
        self.args = (specs[0].link_code, specs[0].ncoef, specs[1].link_code, specs[1].ncoef)

    def value(self, z) -> float:
        return _kernels.loglik(self.x, self.y1, self.y2, self.w, np.asarray(z, float), *self.args)[0]

    def value_and_clamps(self, z) -> tuple:
        ll, nc = _kernels.loglik(self.x, self.y1, self.y2, self.w, np.asarray(z, float), *self.args)
        return float(ll), int(nc)

    def grad(self, z, hrel: float = 1e-6) -> np.ndarray:
        return _kernels.loglik_grad(self.x, self.y1, self.y2, self.w,
                                    np.ascontiguousarray(z, dtype=float), *self.args, hrel)


def _evaluate(sample, specs, p: ParamVector, return_clamps: bool):
    obj = Objective(sample, specs)
    ll, nc = obj.value_and_clamps(transform_params(p))
    return (ll, nc) if return_clamps else ll


def loglik_cont_cont(sample: GroupSample, specs, p: ParamVector, return_clamps: bool = False):
    """Sum of log copula density and both marginal normal log densities."""
    if sample.kinds != (CONTINUOUS, CONTINUOUS):
        raise ValueError("loglik_cont_cont needs two continuous outcomes")
    return _evaluate(sample, specs, p, return_clamps)


def loglik_mixed(sample: GroupSample, specs, p: ParamVector, return_clamps: bool = False):
    """Binary/continuous likelihood built on the copula h-function.

    Either column may hold the binary outcome; the conditional probability
    P(y_b = 0 | y_c) = h(P(y_b = 0), F_c(y_c)) is evaluated with
    ``Phi^{-1}(F_c(y_c))`` replaced by the standardised residual, which is
    the same quantity without the round trip through a probability.
    """
    if set(sample.kinds) != {BINARY, CONTINUOUS}:
        raise ValueError("loglik_mixed needs one binary and one continuous outcome")
    return _evaluate(sample, specs, p, return_clamps)


def cell_probabilities(m1, m2, rho):
    """(p11, p10, p01, p00) from marginal success probabilities under the copula."""
    m1 = np.asarray(m1, float)
    m2 = np.asarray(m2, float)
    p11 = bvn_cdf(normal_quantile(m1), normal_quantile(m2), rho)
    return p11, m1 - p11, m2 - p11, 1.0 - m1 - m2 + p11


def loglik_bin_bin(sample: GroupSample, specs, p: ParamVector, return_clamps: bool = False):
    """Four-cell likelihood with p11 = C(P(y1 = 1), P(y2 = 1))."""
    if sample.kinds != (BINARY, BINARY):
        raise ValueError("loglik_bin_bin needs two binary outcomes")
    for k in range(2):
        m = eval_curve(specs[k], p.coef[k], sample.dose)
        if np.any(m <= 0.0) or np.any(m >= 1.0):
            raise SeparationError(f"margin {k + 1} reaches probability 0 or 1")
    return _evaluate(sample, specs, p, return_clamps)


def joint_loglik(sample: GroupSample, specs, p: ParamVector, return_clamps: bool = False):
    """Dispatch on the outcome kinds of ``sample``."""
    if sample.kinds == (BINARY, BINARY):
        return loglik_bin_bin(sample, specs, p, return_clamps)
    if sample.kinds == (CONTINUOUS, CONTINUOUS):
        return loglik_cont_cont(sample, specs, p, return_clamps)
    return loglik_mixed(sample, specs, p, return_clamps)
