"""Monte Carlo type I error and power of the similarity test over preset scenario grids."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import math
from typing import Callable, Iterable, Mapping

import numpy as np

from .datagen import SIMULATION, SIMULATION_DOSES, GroupGenSpec, RngStream, simulate_group
from .estimation import FitError
from .model import DoseGrid, ParamVector, bernoulli, curve_distances, gaussian
from .testing import MAX_FAIL_FRACTION, BootstrapError, TestConfig, similarity_test

KINDS = ("bin-bin", "cont-cont", "mixed")
GROUP_SIZES = (7, 14, 21, 28, 50)
CHECK_GRID = DoseGrid.linspace(0.0, 2.0, 1001)
CONSISTENCY_TOL = 5e-3
DEFAULT_REPLICATES = 200


class ScenarioError(ValueError):
    """Scenario parameters do not reproduce the declared curve distances."""


def _specs(kind: str) -> tuple:
    """Margin specs (group 1, group 2) for each outcome combination."""
    if kind == "bin-bin":
        s = (bernoulli("logit", "linear"), bernoulli("logit", "linear"))
        return s, s
    if kind == "cont-cont":
        return ((gaussian("linear"), gaussian("linear")),
                (gaussian("quadratic"), gaussian("quadratic")))
    if kind == "mixed":
        return ((gaussian("linear"), bernoulli("logit", "linear")),
                (gaussian("quadratic"), bernoulli("logit", "linear")))
    raise ValueError(f"unknown scenario kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class Scenario:
    """One cell of a simulation table.

    ``theta1``/``theta2`` hold the curve coefficients per outcome; ``rho`` is
    the within-dose correlation of the observable pair and ``sigma2`` the
    variance of every continuous margin.
    """

    name: str
    kind: str
    theta1: tuple
    theta2: tuple
    d: tuple
    epsilon: float
    rho: float
    n_g: int
    sigma2: float | None = None
    doses: tuple = SIMULATION_DOSES
    n_replicates: int = DEFAULT_REPLICATES
    n_boot: int = 300
    alpha: float = 0.05
    seed: int = 1
    reference: float | None = None
    purpose: str = "type1"

    def __post_init__(self):
        specs1, specs2 = _specs(self.kind)
        if (self.kind == "bin-bin") != (self.sigma2 is None):
            raise ValueError("sigma2 is required exactly when a margin is continuous")
        if self.n_replicates < 1 or self.n_g < 1:
            raise ValueError("n_replicates and n_g must be positive")
        object.__setattr__(self, "theta1", tuple(tuple(float(v) for v in c) for c in self.theta1))
        object.__setattr__(self, "theta2", tuple(tuple(float(v) for v in c) for c in self.theta2))
        for th, sp in ((self.theta1, specs1), (self.theta2, specs2)):
            if [len(c) for c in th] != [s.ncoef for s in sp]:
                raise ValueError(f"{self.name}: coefficient counts do not match the curves")
        got = self.recomputed_distances()
        if np.max(np.abs(np.subtract(got, self.d))) > CONSISTENCY_TOL:
            raise ScenarioError(f"{self.name}: declared d={self.d} but curves give "
                                f"({got[0]:.4f}, {got[1]:.4f})")

    @property
    def specs(self) -> tuple:
        return _specs(self.kind)

    def params(self) -> tuple:
        sig = None if self.sigma2 is None else math.sqrt(self.sigma2)
        out = []
        for th, sp in zip((self.theta1, self.theta2), self.specs):
            sigma = tuple(None if s.is_binary else sig for s in sp)
            out.append(ParamVector(th, sigma, self.rho))
        return tuple(out)

    def recomputed_distances(self, grid: DoseGrid = CHECK_GRID) -> tuple:
        p1, p2 = self.params()
        s1, s2 = self.specs
        return curve_distances(s1, p1, s2, p2, grid).d

    def gen_specs(self) -> tuple:
        return tuple(GroupGenSpec(sp, p, self.doses, (self.n_g,), rho_scale="observed")
                     for sp, p in zip(self.specs, self.params()))

    def test_config(self, replicate: int, threads: int = 1) -> TestConfig:
        return TestConfig(self.epsilon, self.alpha, self.n_boot,
                          DoseGrid.linspace(min(self.doses), max(self.doses), 101),
                          seed=replicate_seed(self.seed, replicate), threads=threads)


def replicate_seed(master: int, replicate: int) -> int:
    """Bootstrap seed of one replicate, derived from the master seed."""
    ss = np.random.SeedSequence(int(master), spawn_key=(SIMULATION, int(replicate), 1))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class OperatingCharacteristic:
    """Rejection rate over the successful replicates, with its Monte Carlo standard error."""

    scenario: str
    rate: float
    se: float
    n_replicates: int
    n_rejected: int
    n_failed: int
    reference: float | None = None

    def within(self, k: float = 3.0) -> bool | None:
        """Is the reference value within ``k`` standard errors? (None without a reference.)"""
        if self.reference is None:
            return None
        se = math.sqrt(self.reference * (1 - self.reference) / self.n_replicates)
        return abs(self.rate - self.reference) <= k * max(se, self.se)

    def as_dict(self) -> dict:
        return {"scenario": self.scenario, "rate": self.rate, "se": self.se,
                "n_replicates": self.n_replicates, "n_rejected": self.n_rejected,
                "n_failed": self.n_failed, "reference": self.reference}


def mc_se(rate: float, n: int) -> float:
    return math.sqrt(rate * (1.0 - rate) / n) if n > 0 else float("nan")


def simulate_replicate(s: Scenario, r: int) -> tuple:
    """The two groups' samples of replicate ``r``."""
    g1, g2 = s.gen_specs()
    return (simulate_group(g1, RngStream(s.seed, r, 1, SIMULATION)),
            simulate_group(g2, RngStream(s.seed, r, 2, SIMULATION)))


def run_replicate(s: Scenario, r: int, threads: int = 1) -> bool | None:
    """Decision of replicate ``r``; ``None`` if the test could not be carried out."""
    y1, y2 = simulate_replicate(s, r)
    s1, s2 = s.specs
    try:
        return similarity_test(y1, y2, s1, s2, s.test_config(r, threads)).reject
    except (FitError, BootstrapError, FloatingPointError):
        return None


def run_scenario(s: Scenario, threads: int = 1, done: Mapping[int, bool | None] | None = None,
                 on_replicate: Callable[[int, bool | None], None] | None = None
                 ) -> OperatingCharacteristic:
    """Rejection rate of the similarity test over ``s.n_replicates`` simulated datasets.

    ``done`` carries decisions from an earlier, interrupted run; those
    replicates are not recomputed. ``on_replicate`` is called once per newly
    finished replicate (in replicate order).
    """
    done = dict(done or {})
    todo = [r for r in range(s.n_replicates) if r not in done]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for r, dec in zip(todo, ex.map(lambda r: run_replicate(s, r), todo)):
                done[r] = dec
                if on_replicate:
                    on_replicate(r, dec)
    else:
        for r in todo:
            done[r] = run_replicate(s, r)
            if on_replicate:
                on_replicate(r, done[r])
    decisions = [done[r] for r in range(s.n_replicates)]
    failed = sum(d is None for d in decisions)
    if failed > MAX_FAIL_FRACTION * s.n_replicates:
        raise BootstrapError(f"{s.name}: {failed} of {s.n_replicates} replicates failed")
    ok = [d for d in decisions if d is not None]
    n_rej = int(sum(ok))
    rate = n_rej / len(ok) if ok else float("nan")
    return OperatingCharacteristic(s.name, rate, mc_se(rate, len(ok)), len(ok), n_rej, failed,
                                   s.reference)


# --- presets ----------------------------------------------------------------

# Binary-binary: group 1 is (-1, 2) / (-3, 3) throughout.
_BIN_T1 = ((-1.0, 2.0), (-3.0, 3.0))
# (eps, theta2, d, rates for rho = 0.1, 0.2, 0.3 at n_g = 7, 14, 21, 28, 50)
_TABLE1 = (
    (0.2, ((-2.4, 3.4), (-1.8, 2.51)), (0.2, 0.2),
     ((0.031, 0.037, 0.038), (0.012, 0.012, 0.018), (0.013, 0.006, 0.012),
      (0.007, 0.006, 0.005), (0.006, 0.009, 0.004))),
    (0.2, ((-1.0, 2.0), (-1.8, 2.51)), (0.0, 0.2),
     ((0.072, 0.106, 0.106), (0.084, 0.100, 0.089), (0.082, 0.088, 0.078),
      (0.064, 0.070, 0.078), (0.054, 0.066, 0.058))),
    (0.15, ((-2.0, 3.4), (-2.0, 2.51)), (0.15, 0.15),
     ((0.057, 0.051, 0.058), (0.032, 0.022, 0.026), (0.021, 0.022, 0.020),
      (0.012, 0.013, 0.007), (0.013, 0.010, 0.008))),
    (0.15, ((-1.0, 2.0), (-2.0, 2.51)), (0.0, 0.15),
     ((0.089, 0.097, 0.088), (0.085, 0.077, 0.087), (0.075, 0.081, 0.082),
      (0.062, 0.068, 0.088), (0.067, 0.083, 0.073))),
)
# Power configurations: coefficients moved along the segment from group 1's
# curves towards the (0.2, 0.2) curves until the target distance is met.
_BIN_POWER = (
    ((0.1, 0.1), ((-1.5831, 2.5831), (-2.3811, 2.7473))),
    ((0.05, 0.05), ((-1.2714, 2.2714), (-2.6846, 2.8712))),
    ((0.0, 0.0), _BIN_T1),
)
_BIN_POWER_REFERENCE = {(0.2, (0.0, 0.0), 50, 0.2): 0.919}


def _quad(d: float) -> tuple:
    return (0.0, 1.0 - 2.0 * d, d)


# Continuous-continuous: group 1 is (0, 1) for both outcomes; rho = 0.2.
_CONT_T1 = ((0.0, 1.0), (0.0, 1.0))
# (eps, d, rates for sigma^2 = 0.05, 0.1, 0.2 at n_g = 7, 14, 21, 28, 50)
_TABLE2 = (
    (0.2, (0.2, 0.2),
     ((0.044, 0.037, 0.045), (0.029, 0.037, 0.038), (0.016, 0.021, 0.039),
      (0.005, 0.012, 0.022), (0.013, 0.012, 0.018))),
    (0.2, (0.0, 0.2),
     ((0.090, 0.104, 0.095), (0.064, 0.087, 0.089), (0.075, 0.073, 0.080),
      (0.054, 0.072, 0.086), (0.056, 0.077, 0.079))),
    (0.15, (0.15, 0.15),
     ((0.044, 0.055, 0.07), (0.035, 0.045, 0.06), (0.018, 0.044, 0.043),
      (0.017, 0.033, 0.040), (0.014, 0.021, 0.034))),
    (0.15, (0.0, 0.15),
     ((0.096, 0.079, 0.106), (0.092, 0.099, 0.096), (0.081, 0.084, 0.089),
      (0.065, 0.083, 0.079), (0.054, 0.089, 0.096))),
)

# Mixed: efficacy (gaussian) then toxicity (logit); group 1 is (0, 1) / (-1, 2).
_MIX_T1 = ((0.0, 1.0), (-1.0, 2.0))
# Toxicity coefficients of group 2 for a given toxicity distance d_2.
_MIX_TOX = {0.2: (-2.4, 3.4), 0.15: (-2.0, 3.4), 0.1: (-1.5831, 2.5831),
            0.05: (-1.2714, 2.2714), 0.0: (-1.0, 2.0)}
# (eps, d, rates for sigma^2 = 0.05, 0.1, 0.2 at n_g = 7, 14, 21, 28, 50)
_TABLE3 = (
    (0.2, (0.2, 0.2),
     ((0.032, 0.035, 0.038), (0.022, 0.031, 0.03), (0.018, 0.009, 0.017),
      (0.014, 0.016, 0.019), (0.013, 0.014, 0.016))),
    (0.2, (0.2, 0.0),
     ((0.067, 0.076, 0.083), (0.077, 0.078, 0.079), (0.070, 0.071, 0.103),
      (0.073, 0.072, 0.084), (0.049, 0.057, 0.069))),
    (0.2, (0.0, 0.2),
     ((0.114, 0.117, 0.076), (0.082, 0.075, 0.070), (0.061, 0.072, 0.068),
      (0.059, 0.055, 0.062), (0.059, 0.045, 0.055))),
    (0.15, (0.15, 0.15),
     ((0.037, 0.036, 0.051), (0.029, 0.022, 0.038), (0.023, 0.024, 0.034),
      (0.013, 0.02, 0.031), (0.018, 0.009, 0.019))),
    (0.15, (0.15, 0.0),
     ((0.073, 0.077, 0.090), (0.075, 0.077, 0.082), (0.075, 0.084, 0.089),
      (0.048, 0.069, 0.084), (0.070, 0.071, 0.080))),
    (0.15, (0.0, 0.15),
     ((0.097, 0.091, 0.092), (0.092, 0.086, 0.075), (0.076, 0.099, 0.076),
      (0.056, 0.068, 0.067), (0.045, 0.051, 0.073))),
)

SIGMA2_LEVELS = (0.05, 0.1, 0.2)
RHO_LEVELS = (0.1, 0.2, 0.3)
POWER_D = ((0.1, 0.1), (0.05, 0.05), (0.0, 0.0))
EPSILONS = (0.2, 0.15)


def _name(kind, eps, d, n, extra) -> str:
    return f"{kind} eps={eps:g} d=({d[0]:g},{d[1]:g}) n={n} {extra}"


def _table1() -> list:
    out = []
    for eps, t2, d, rates in _TABLE1:
        for n, row in zip(GROUP_SIZES, rates):
            for rho, ref in zip(RHO_LEVELS, row):
                out.append(Scenario(_name("bin-bin", eps, d, n, f"rho={rho:g}"), "bin-bin",
                                    _BIN_T1, t2, d, eps, rho, n, reference=ref))
    return out


def _power_binary() -> list:
    out = []
    for eps in EPSILONS:
        for d, t2 in _BIN_POWER:
            for n in GROUP_SIZES:
                for rho in RHO_LEVELS:
                    ref = _BIN_POWER_REFERENCE.get((eps, d, n, rho))
                    out.append(Scenario(_name("bin-bin", eps, d, n, f"rho={rho:g}"), "bin-bin",
                                        _BIN_T1, t2, d, eps, rho, n, reference=ref, purpose="power"))
    return out


def _cont_theta2(d) -> tuple:
    return (_quad(d[0]), _quad(d[1]))


def _mixed_theta2(d) -> tuple:
    return (_quad(d[0]), _MIX_TOX[d[1]])


def _sigma_grid(kind, t1, table, theta2) -> list:
    out = []
    for eps, d, rates in table:
        for n, row in zip(GROUP_SIZES, rates):
            for s2, ref in zip(SIGMA2_LEVELS, row):
                out.append(Scenario(_name(kind, eps, d, n, f"sigma2={s2:g} rho=0.2"), kind,
                                    t1, theta2(d), d, eps, 0.2, n, sigma2=s2, reference=ref))
    return out


def _sigma_power(kind, t1, theta2) -> list:
    out = []
    for eps in EPSILONS:
        for d in POWER_D:
            for n in GROUP_SIZES:
                for s2 in SIGMA2_LEVELS:
                    out.append(Scenario(_name(kind, eps, d, n, f"sigma2={s2:g} rho=0.2"), kind,
                                        t1, theta2(d), d, eps, 0.2, n, sigma2=s2, purpose="power"))
    return out


def scenario_presets() -> dict:
    """Named scenario lists.

    ``table1``-``table3`` hold the reference type I error cells (row by row,
    then column by column); the ``power-*`` sets hold the power grids.
    """
    p = {
        "table1": _table1(),
        "table2": _sigma_grid("cont-cont", _CONT_T1, _TABLE2, _cont_theta2),
        "table3": _sigma_grid("mixed", _MIX_T1, _TABLE3, _mixed_theta2),
        "power-binary": _power_binary(),
        "power-continuous": _sigma_power("cont-cont", _CONT_T1, _cont_theta2),
        "power-mixed": _sigma_power("mixed", _MIX_T1, _mixed_theta2),
    }
    p["binary"] = p["table1"] + p["power-binary"]
    return p


def find_scenario(preset: str, **match) -> Scenario:
    """First scenario of ``preset`` whose attributes equal ``match``."""
    for s in scenario_presets()[preset]:
        if all(getattr(s, k) == v for k, v in match.items()):
            return s
    raise KeyError(f"no scenario in {preset} with {match}")


def select_rows(scenarios: list, rows: str | None) -> list:
    """Subset by 1-based row spec such as ``"1,4-6"``."""
    if not rows:
        return list(scenarios)
    picked = []
    for part in rows.split(","):
        part = part.strip()
        if "-" in part:
            a, b = (int(v) for v in part.split("-", 1))
            idx = range(a, b + 1)
        else:
            idx = [int(part)]
        for i in idx:
            if not 1 <= i <= len(scenarios):
                raise ValueError(f"row {i} out of range 1..{len(scenarios)}")
            picked.append(scenarios[i - 1])
    return picked


def with_overrides(s: Scenario, **kw) -> Scenario:
    return replace(s, **{k: v for k, v in kw.items() if v is not None})
