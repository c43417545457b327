"""Dose-response curves, margin specifications, parameter layout and distances."""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Sequence

import numpy as np
from scipy import special

CURVE_NCOEF = {"linear": 2, "quadratic": 3}
LINKS = {"bernoulli": ("logit", "probit", "cloglog"), "gaussian": ("identity",)}
LINK_CODES = {"identity": 0, "logit": 1, "probit": 2, "cloglog": 3}


@dataclass(frozen=True)
class MarginSpec:
    """Family, link and curve shape of one outcome of one group."""

    family: str
    link: str
    curve: str

    def __post_init__(self):
        if self.family not in LINKS:
            raise ValueError(f"unknown family {self.family!r}")
        if self.link not in LINKS[self.family]:
            raise ValueError(f"link {self.link!r} not available for {self.family}")
        if self.curve not in CURVE_NCOEF:
            raise ValueError(f"unknown curve shape {self.curve!r}")

    @classmethod
    def parse(cls, text: str) -> "MarginSpec":
        """Parse ``family/link/curve``, e.g. ``bernoulli/logit/linear``.

        ``gaussian/quadratic`` (link omitted) is accepted for gaussian margins.
        """
        parts = [p.strip().lower() for p in text.split("/")]
        if len(parts) == 2 and parts[0] == "gaussian":
            parts = ["gaussian", "identity", parts[1]]
        if len(parts) != 3:
            raise ValueError(f"margin spec must look like family/link/curve, got {text!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return f"{self.family}/{self.link}/{self.curve}"

    @property
    def ncoef(self) -> int:
        return CURVE_NCOEF[self.curve]

    @property
    def is_binary(self) -> bool:
        return self.family == "bernoulli"

    @property
    def link_code(self) -> int:
        return LINK_CODES[self.link]


def gaussian(curve: str = "linear") -> MarginSpec:
    return MarginSpec("gaussian", "identity", curve)


def bernoulli(link: str = "logit", curve: str = "linear") -> MarginSpec:
    return MarginSpec("bernoulli", link, curve)


Specs = tuple  # pair of MarginSpec, one per outcome


def n_params(specs: Sequence[MarginSpec]) -> int:
    return sum(s.ncoef for s in specs) + sum(not s.is_binary for s in specs) + 1


@dataclass
class ParamVector:
    """Parameters of one group's bivariate model.

    ``sigma`` holds one entry per gaussian margin (``None`` for bernoulli
    margins). The flat layout is ``(theta_1, theta_2, sigma..., rho)``.
    """

    coef: tuple
    sigma: tuple
    rho: float

    def __post_init__(self):
        self.coef = tuple(np.asarray(c, dtype=float) for c in self.coef)
        self.sigma = tuple(None if s is None else float(s) for s in self.sigma)
        self.rho = float(self.rho)
        for s in self.sigma:
            if s is not None and not s > 0.0:
                raise ValueError(f"sigma must be positive, got {s}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")

    @classmethod
    def from_array(cls, specs: Sequence[MarginSpec], arr) -> "ParamVector":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (n_params(specs),):
            raise ValueError(f"expected {n_params(specs)} parameters, got {arr.shape}")
        pos = 0
        coef = []
        for s in specs:
            coef.append(arr[pos:pos + s.ncoef])
            pos += s.ncoef
        sigma = []
        for s in specs:
            if s.is_binary:
                sigma.append(None)
            else:
                sigma.append(arr[pos])
                pos += 1
        return cls(tuple(coef), tuple(sigma), arr[pos])

    def to_array(self) -> np.ndarray:
        parts = [*self.coef, [s for s in self.sigma if s is not None], [self.rho]]
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def copy(self) -> "ParamVector":
        return ParamVector(tuple(c.copy() for c in self.coef), self.sigma, self.rho)


def transform_params(p: ParamVector) -> np.ndarray:
    """Map to the unconstrained scale: log sigma, atanh rho, coefficients unchanged."""
    parts = [*p.coef, [math.log(s) for s in p.sigma if s is not None], [math.atanh(p.rho)]]
    return np.concatenate([np.asarray(q, dtype=float) for q in parts])


def untransform_params(specs: Sequence[MarginSpec], z) -> ParamVector:
    z = np.asarray(z, dtype=float)
    arr = z.copy()
    nco = sum(s.ncoef for s in specs)
    nsig = sum(not s.is_binary for s in specs)
    arr[nco:nco + nsig] = np.exp(z[nco:nco + nsig])
    arr[-1] = math.tanh(z[-1])
    return ParamVector.from_array(specs, arr)


@dataclass(frozen=True)
class DoseGrid:
    """Discretisation of the dose range used for curve distances."""

    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a dose grid needs at least two points")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be finite and strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def linspace(cls, lower: float, upper: float, n: int = 101) -> "DoseGrid":
        if not upper > lower:
            raise ValueError("grid upper bound must exceed lower bound")
        return cls(np.linspace(lower, upper, int(n)))

    @property
    def lower(self) -> float:
        return float(self.points[0])

    @property
    def upper(self) -> float:
        return float(self.points[-1])

    def __len__(self) -> int:
        return self.points.size


def _design(curve_n: int, x):
    x = np.asarray(x, dtype=float)
    cols = [np.ones_like(x), x]
    if curve_n == 3:
        cols.append(x * x)
    return np.stack(cols, axis=-1)


def _check_coef(spec: MarginSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.ncoef,):
        raise ValueError(f"{spec.curve} curve needs {spec.ncoef} coefficients, got {theta.shape}")
    return theta


def linear_predictor(spec: MarginSpec, theta, x):
    theta = _check_coef(spec, theta)
    return _design(spec.ncoef, x) @ theta


def inverse_link(link: str, eta):
    if link == "identity":
        return eta
    if link == "logit":
        return special.expit(eta)
    if link == "probit":
        return special.ndtr(eta)
    return -np.expm1(-np.exp(eta))


def _inverse_link_deriv(link: str, eta):
    if link == "identity":
        return np.ones_like(eta)
    if link == "logit":
        m = special.expit(eta)
        return m * (1.0 - m)
    if link == "probit":
        return np.exp(-0.5 * eta * eta) / math.sqrt(2.0 * math.pi)
    return np.exp(eta - np.exp(eta))


def eval_curve(spec: MarginSpec, theta, x):
    """Mean response m(x): a probability for bernoulli margins, real otherwise."""
    out = inverse_link(spec.link, linear_predictor(spec, theta, x))
    return float(out) if np.ndim(out) == 0 else out


def curve_jacobian(spec: MarginSpec, theta, x) -> np.ndarray:
    """d m(x) / d theta, shape ``(len(x), ncoef)``."""
    theta = _check_coef(spec, theta)
    X = _design(spec.ncoef, np.atleast_1d(x))
    return X * _inverse_link_deriv(spec.link, X @ theta)[:, None]


def _check_same_scale(spec1: MarginSpec, spec2: MarginSpec):
    if spec1.is_binary != spec2.is_binary:
        raise ValueError("cannot compare a probability-valued curve with a real-valued one")


def max_distance(spec1: MarginSpec, theta1, spec2: MarginSpec, theta2, grid: DoseGrid):
    """Largest absolute deviation between two curves on the grid.

    Returns ``(d, dose)``; ties resolve to the smallest dose.
    """
    _check_same_scale(spec1, spec2)
    diff = np.abs(eval_curve(spec1, theta1, grid.points) - eval_curve(spec2, theta2, grid.points))
    i = int(np.argmax(diff))
    return float(diff[i]), float(grid.points[i])


@dataclass(frozen=True)
class DistanceResult:
    """Per-outcome maximal deviations and their maximum.

    ``outcome`` is the 0-based index of the outcome attaining ``d_max``.
    """

    d: tuple
    argmax_dose: tuple
    d_max: float
    outcome: int

    def as_dict(self) -> dict:
        return {
            "d": [float(v) for v in self.d],
            "argmax_dose": [float(v) for v in self.argmax_dose],
            "d_max": float(self.d_max),
            "outcome": int(self.outcome) + 1,
        }


def d_max(distances: Sequence[tuple]) -> DistanceResult:
    """Maximum of per-outcome maxima; ties go to the lowest outcome index."""
    if len(distances) == 0:
        raise ValueError("need at least one outcome distance")
    ds = [float(d) for d, _ in distances]
    k = int(np.argmax(ds))
    return DistanceResult(tuple(ds), tuple(float(x) for _, x in distances), ds[k], k)


def curve_distances(specs1, p1: ParamVector, specs2, p2: ParamVector, grid: DoseGrid,
                    outcomes: Sequence[int] | None = None) -> DistanceResult:
    """Distances between two groups' fitted curves for the selected outcomes."""
    ks = range(len(specs1)) if outcomes is None else outcomes
    per = [max_distance(specs1[k], p1.coef[k], specs2[k], p2.coef[k], grid) for k in ks]
    res = d_max(per)
    if outcomes is None:
        return res
    return DistanceResult(res.d, res.argmax_dose, res.d_max, list(ks)[res.outcome])


def rescale_outcome(values, eps_k: float, eps_global: float, kind: str = "continuous"):
    """Rescale a continuous outcome so that threshold ``eps_k`` maps onto ``eps_global``."""
    if kind != "continuous":
        raise ValueError("only continuous outcomes can be rescaled")
    if not (eps_k > 0 and eps_global > 0):
        raise ValueError("thresholds must be positive")
    return np.asarray(values, dtype=float) * (eps_global / eps_k)
