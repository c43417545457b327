"""Maximum likelihood per group and the constrained two-group estimator.

Both estimators work on the unconstrained scale (log sigma, atanh rho) with
the negative log-likelihood divided by the sample size as objective.
Gradients are central finite differences computed inside the kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .likelihood import GroupSample, Objective
from .model import (
    DoseGrid,
    MarginSpec,
    ParamVector,
    curve_distances,
    curve_jacobian,
    eval_curve,
    transform_params,
    untransform_params,
)

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max-iterations"
FAILED = "failed"
PASSTHROUGH = "passthrough"

# The association MLE can sit on the edge of the parameter space (e.g. no
# joint events in a small binary sample); it is then fitted on |rho| <= RHO_MAX.
RHO_MAX = 0.9999
_Z_RHO_MAX = math.atanh(RHO_MAX)


class FitError(RuntimeError):
    """Raised when an estimator cannot produce a usable estimate."""


@dataclass(frozen=True)
class OptimizerSettings:
    mle_maxiter: int = 400
    mle_gtol: float = 1e-6
    fd_step: float = 1e-6
    newton_steps: int = 8
    al_mu0: float = 10.0
    al_mu_factor: float = 10.0
    al_shrink: float = 0.25
    al_max_outer: int = 50
    al_inner_maxiter: int = 300
    al_ctol: float = 1e-7
    al_temperatures: tuple = (1e-2, 1e-3, 1e-4, 1e-5)
    constraint_tol: float = 1e-4


DEFAULT_SETTINGS = OptimizerSettings()


@dataclass
class JointFit:
    """MLE of one group's bivariate model."""

    params: ParamVector
    loglik: float
    status: str
    n_iter: int
    n_clamped: int = 0
    grad_norm: float = float("nan")
    separated: bool = False
    specs: tuple = field(default=(), repr=False)

    @property
    def ok(self) -> bool:
        return self.status == CONVERGED


@dataclass
class ConstrainedFit:
    """Parameters of both groups fitted on the null boundary d_max = eps."""

    params: tuple
    loglik: float
    residual: float
    d_max: float
    n_outer: int
    status: str
    branch: str

    @property
    def ok(self) -> bool:
        return self.status in (CONVERGED, PASSTHROUGH)


def finite_diff_gradient(f: Callable, x, h=None) -> np.ndarray:
    """Central differences with steps ``1e-6 * (1 + |x_j|)`` unless ``h`` is given.

    ``h`` may be a scalar relative factor replacing ``1e-6``.
    """
    x = np.asarray(x, dtype=float)
    rel = 1e-6 if h is None else float(h)
    g = np.empty_like(x)
    xx = x.copy()
    for j in range(x.size):
        step = rel * (1.0 + abs(x[j]))
        xx[j] = x[j] + step
        fp = f(xx)
        xx[j] = x[j] - step
        fm = f(xx)
        xx[j] = x[j]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"objective not finite around coordinate {j}")
        g[j] = (fp - fm) / (2.0 * step)
    return g


def default_start(sample: GroupSample, specs: Sequence[MarginSpec]) -> ParamVector:
    """Zero coefficients, sigma = sample standard deviation, rho = 0."""
    coef = tuple(np.zeros(s.ncoef) for s in specs)
    sig = []
    for s, y in zip(specs, sample.outcomes):
        if s.is_binary:
            sig.append(None)
        else:
            sd = float(np.std(y, ddof=1)) if y.size > 1 else 1.0
            sig.append(sd if sd > 0 else 1.0)
    return ParamVector(coef, tuple(sig), 0.0)


def _fd_hessian(grad, z, rel=1e-4):
    p = z.size
    H = np.empty((p, p))
    zz = z.copy()
    for j in range(p):
        h = rel * (1.0 + abs(z[j]))
        zz[j] = z[j] + h
        gp = grad(zz)
        zz[j] = z[j] - h
        gm = grad(zz)
        zz[j] = z[j]
        H[:, j] = (gp - gm) / (2.0 * h)
    return 0.5 * (H + H.T)


def _newton_polish(fun, grad, z, steps, gtol):
    """Damped Newton iterations with a finite-difference Hessian."""
    f = fun(z)
    g = grad(z)
    for _ in range(steps):
        if np.max(np.abs(g)) <= gtol:
            break
        H = _fd_hessian(grad, z)
        w, V = np.linalg.eigh(H)
        w = np.maximum(w, 1e-8 * max(1.0, np.max(np.abs(w))))
        step = -V @ ((V.T @ g) / w)
        t = 1.0
        while t > 1e-6:
            zn = z + t * step
            fn = fun(zn)
            if np.isfinite(fn) and fn <= f + 1e-4 * t * (g @ step):
                break
            t *= 0.5
        else:
            break
        z, f = zn, fn
        g = grad(z)
    return z, f, g


def _projected_gradient(g, z):
    """Gradient with the rho component zeroed where the bound is active and binding."""
    g = g.copy()
    if z[-1] >= _Z_RHO_MAX and g[-1] < 0 or z[-1] <= -_Z_RHO_MAX and g[-1] > 0:
        g[-1] = 0.0
    return g


def _boundary_fit(fun, jac, z, settings):
    """Refit with rho restricted to [-RHO_MAX, RHO_MAX]; returns (z, projected gradient)."""
    z = z.copy()
    z[-1] = np.clip(z[-1], -_Z_RHO_MAX, _Z_RHO_MAX)
    bounds = [(None, None)] * (z.size - 1) + [(-_Z_RHO_MAX, _Z_RHO_MAX)]
    res = optimize.minimize(fun, z, jac=jac, method="L-BFGS-B", bounds=bounds,
                            options={"gtol": settings.mle_gtol * 0.1, "maxiter": settings.mle_maxiter,
                                     "ftol": 1e-15})
    z = res.x
    g = _projected_gradient(jac(z), z)
    if np.max(np.abs(g)) > settings.mle_gtol and g[-1] == 0.0:
        # polish the free coordinates with rho held on the bound
        rho = z[-1]
        sub = _newton_polish(lambda u: fun(np.append(u, rho)), lambda u: jac(np.append(u, rho))[:-1],
                             z[:-1], settings.newton_steps, settings.mle_gtol)[0]
        z = np.append(sub, rho)
        g = _projected_gradient(jac(z), z)
    return z, g


def _binary_separated(sample: GroupSample, specs, p: ParamVector) -> bool:
    doses = np.unique(sample.dose)
    for k, s in enumerate(specs):
        if s.is_binary:
            m = eval_curve(s, p.coef[k], doses)
            if np.any(m < 1e-8) or np.any(m > 1.0 - 1e-8):
                return True
    return False


def fit_mle(sample: GroupSample, specs: Sequence[MarginSpec], init: ParamVector | None = None,
            settings: OptimizerSettings = DEFAULT_SETTINGS) -> JointFit:
    """Maximise the group's joint log-likelihood.

    The returned status is ``converged`` only when the sup-norm of the
    gradient of the per-observation log-likelihood is below ``mle_gtol``.
    """
    specs = tuple(specs)
    obj = Objective(sample, specs)
    n = obj.n
    hrel = settings.fd_step

    def fun(z):
        v = -obj.value(z) / n
        return v if np.isfinite(v) else 1e300

    def jac(z):
        return -obj.grad(z, hrel) / n

    z0 = transform_params(init if init is not None else default_start(sample, specs))
    with np.errstate(all="ignore"):
        res = optimize.minimize(fun, z0, jac=jac, method="BFGS",
                                options={"gtol": settings.mle_gtol * 0.1,
                                         "maxiter": settings.mle_maxiter})
        z = res.x
        g = jac(z)
        nit = int(res.nit)
        if np.max(np.abs(g)) > settings.mle_gtol:
            z, _, g = _newton_polish(fun, jac, z, settings.newton_steps, settings.mle_gtol)
            nit += settings.newton_steps
        if abs(z[-1]) > _Z_RHO_MAX:
            z, g = _boundary_fit(fun, jac, z, settings)
    gnorm = float(np.max(np.abs(g)))
    ll, nclamp = obj.value_and_clamps(z)
    if not np.isfinite(ll) or not np.all(np.isfinite(z)):
        status = FAILED
    elif gnorm <= settings.mle_gtol:
        status = CONVERGED
    else:
        status = MAX_ITER
    params = untransform_params(specs, z)
    sep = _binary_separated(sample, specs, params)
    if nclamp:
        log.debug("fit_mle: %d probabilities clamped", nclamp)
    return JointFit(params, float(ll), status, nit, nclamp, gnorm, sep, specs)


class _DistanceConstraint:
    """Smoothed (log-sum-exp) or exact-point version of max |m1(x) - m2(x)| - eps."""

    def __init__(self, specs1, specs2, grid: DoseGrid, outcomes, eps, split):
        self.specs1 = specs1
        self.specs2 = specs2
        self.x = grid.points
        self.outcomes = list(outcomes)
        self.eps = eps
        self.split = split
        self.off1 = np.cumsum([0] + [s.ncoef for s in specs1])
        self.off2 = np.cumsum([0] + [s.ncoef for s in specs2])

    def pieces(self, z):
        """Signed differences for every (outcome, sign, grid point) and their gradients."""
        z1, z2 = z[:self.split], z[self.split:]
        vals, grads = [], []
        for k in self.outcomes:
            c1 = z1[self.off1[k]:self.off1[k + 1]]
            c2 = z2[self.off2[k]:self.off2[k + 1]]
            diff = eval_curve(self.specs1[k], c1, self.x) - eval_curve(self.specs2[k], c2, self.x)
            J = np.zeros((self.x.size, z.size))
            J[:, self.off1[k]:self.off1[k + 1]] = curve_jacobian(self.specs1[k], c1, self.x)
            J[:, self.split + self.off2[k]:self.split + self.off2[k + 1]] = \
                -curve_jacobian(self.specs2[k], c2, self.x)
            vals.extend([diff, -diff])
            grads.extend([J, -J])
        return np.concatenate(vals), np.concatenate(grads)

    def exact(self, z) -> float:
        v, _ = self.pieces(z)
        return float(np.max(v))

    def smooth(self, z, tau):
        v, G = self.pieces(z)
        m = np.max(v)
        e = np.exp((v - m) / tau)
        s = e.sum()
        return m + tau * np.log(s) - self.eps, (e / s) @ G

    def point(self, z, idx):
        v, G = self.pieces(z)
        return v[idx] - self.eps, G[idx]


def _augmented_lagrangian(fun, jac, cons, z, settings, lam=0.0, mu=None):
    """Equality-constrained minimisation of ``fun`` subject to ``cons(z)[0] = 0``.

    Returns ``(z, lam, mu, n_outer, converged)``.
    """
    mu = settings.al_mu0 if mu is None else mu
    c_prev = np.inf
    for outer in range(1, settings.al_max_outer + 1):
        def L(zz, lam=lam, mu=mu):
            c, _ = cons(zz)
            return fun(zz) + lam * c + 0.5 * mu * c * c

        def dL(zz, lam=lam, mu=mu):
            c, gc = cons(zz)
            return jac(zz) + (lam + mu * c) * gc

        with np.errstate(all="ignore"):
            res = optimize.minimize(L, z, jac=dL, method="BFGS",
                                    options={"gtol": 1e-8, "maxiter": settings.al_inner_maxiter})
        z = res.x
        c, _ = cons(z)
        lam = lam + mu * c
        if abs(c) <= settings.al_ctol:
            return z, lam, mu, outer, True
        if abs(c) > settings.al_shrink * abs(c_prev):
            mu *= settings.al_mu_factor
        c_prev = c
    return z, lam, mu, settings.al_max_outer, False


def fit_constrained(sample1: GroupSample, sample2: GroupSample, specs1, specs2, eps: float,
                    grid: DoseGrid, mle_pair: Sequence[JointFit], outcomes: Sequence[int] | None = None,
                    settings: OptimizerSettings = DEFAULT_SETTINGS) -> ConstrainedFit:
    """Constrained estimate of both groups under ``d_max = eps``.

    When the observed distance already reaches ``eps`` the MLE pair is
    returned unchanged. Otherwise the summed log-likelihood is maximised
    subject to the grid maximum of the curve deviations (over ``outcomes``,
    default all) equalling ``eps``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    specs1, specs2 = tuple(specs1), tuple(specs2)
    ks = list(range(len(specs1))) if outcomes is None else list(outcomes)
    m1, m2 = mle_pair
    d_hat = curve_distances(specs1, m1.params, specs2, m2.params, grid, ks).d_max
    if d_hat >= eps:
        return ConstrainedFit((m1.params, m2.params), m1.loglik + m2.loglik, 0.0, d_hat, 0,
                              PASSTHROUGH, "mle")

    obj1 = Objective(sample1, specs1)
    obj2 = Objective(sample2, specs2)
    ntot = obj1.n + obj2.n
    z1 = transform_params(m1.params)
    z2 = transform_params(m2.params)
    split = z1.size
    hrel = settings.fd_step

    def fun(z):
        v = -(obj1.value(z[:split]) + obj2.value(z[split:])) / ntot
        return v if np.isfinite(v) else 1e300

    def jac(z):
        return -np.concatenate([obj1.grad(z[:split], hrel), obj2.grad(z[split:], hrel)]) / ntot

    con = _DistanceConstraint(specs1, specs2, grid, ks, eps, split)
    z = np.concatenate([z1, z2])
    lam, mu = 0.0, None
    n_outer = 0
    for tau in settings.al_temperatures:
        z, lam, mu, k, _ = _augmented_lagrangian(fun, jac, lambda zz, t=tau: con.smooth(zz, t),
                                                 z, settings, lam, mu)
        n_outer += k

    best = z
    if abs(con.exact(z) - eps) > settings.constraint_tol:
        # Pin the active grid point exactly; retry if another point takes over.
        tried = set()
        for _ in range(5):
            v, _ = con.pieces(best)
            idx = int(np.argmax(v))
            if idx in tried:
                break
            tried.add(idx)
            zp, _, _, k, _ = _augmented_lagrangian(fun, jac, lambda zz, i=idx: con.point(zz, i),
                                                   best, settings, 0.0, None)
            n_outer += k
            best = zp
            if abs(con.exact(best) - eps) <= settings.constraint_tol:
                break

    dm = con.exact(best)
    resid = abs(dm - eps)
    ll = obj1.value(best[:split]) + obj2.value(best[split:])
    status = CONVERGED if resid <= settings.constraint_tol and np.isfinite(ll) else FAILED
    params = (untransform_params(specs1, best[:split]), untransform_params(specs2, best[split:]))
    return ConstrainedFit(params, float(ll), float(resid), float(dm), n_outer, status, "constrained")


__all__ = [
    "ConstrainedFit", "FitError", "JointFit", "OptimizerSettings", "DEFAULT_SETTINGS",
    "default_start", "finite_diff_gradient", "fit_constrained", "fit_mle",
]
