"""Numba kernels: normal primitives, bivariate normal CDF, joint log-likelihoods.

Every public function here has a vectorised twin in ``_kernels_np`` with the
same signature; ``_kernels`` picks one of the two at import time.

Link codes: 0 identity (gaussian margin), 1 logit, 2 probit, 3 cloglog.
Unconstrained parameter layout ``z``: coefficients of outcome 1, coefficients
of outcome 2, ``log sigma`` for each gaussian margin in outcome order,
``atanh rho``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

CLAMP = 1e-12
_SQRT2 = math.sqrt(2.0)
_LOG_2PI = math.log(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi

# Acklam's rational approximation, refined below by Halley steps.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)

# Gauss-Legendre half-rules (6, 12, 20 points) used by the Drezner-Wesolowsky /
# Genz reduction of the bivariate normal integral.
_GL_X6 = np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970])
_GL_W6 = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])
_GL_X12 = np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                    0.5873179542866171, 0.3678314989981802, 0.1252334085114692])
_GL_W12 = np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                    0.2031674267230659, 0.2334925365383547, 0.2491470458134029])
_GL_X20 = np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                    0.07652652113349733])
_GL_W20 = np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                    0.1527533871307259])


@njit(cache=True, nogil=True)
def ndtr(z):
    return 0.5 * math.erfc(-z / _SQRT2)


@njit(cache=True, nogil=True)
def ndtri(p):
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - plow:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # Two Halley steps; the upper-tail residual uses the complementary cdf.
    for _ in range(2):
        if x <= 0.0:
            e = 0.5 * math.erfc(-x / _SQRT2) - p
        else:
            e = (1.0 - p) - 0.5 * math.erfc(x / _SQRT2)
        u = e * math.sqrt(_TWO_PI) * math.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


@njit(cache=True, nogil=True)
def _bvnu(h, k, r):
    """P(X > h, Y > k) for a standard bivariate normal with correlation r."""
    if h == np.inf or k == np.inf:
        return 0.0
    if h == -np.inf:
        if k == -np.inf:
            return 1.0
        return ndtr(-k)
    if k == -np.inf:
        return ndtr(-h)
    if r == 0.0:
        return ndtr(-h) * ndtr(-k)
    ar = abs(r)
    if ar < 0.3:
        xs = _GL_X6
        ws = _GL_W6
    elif ar < 0.75:
        xs = _GL_X12
        ws = _GL_W12
    else:
        xs = _GL_X20
        ws = _GL_W20
    ng = xs.shape[0]
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * math.asin(r)
        for i in range(ng):
            for sgn in (-1.0, 1.0):
                sn = math.sin(asr * (1.0 + sgn * xs[i]))
                bvn += ws[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / _TWO_PI + ndtr(-h) * ndtr(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if ar < 1.0:
            a_s = (1.0 - r) * (1.0 + r)
            a = math.sqrt(a_s)
            bs = (h - k) * (h - k)
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            asr = -0.5 * (bs / a_s + hk)
            if asr > -100.0:
                bvn = a * math.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0
                                           + c * d * a_s * a_s)
            if hk > -100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(_TWO_PI) * ndtr(-b / a)
                bvn -= math.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            a = 0.5 * a
            acc = 0.0
            for i in range(ng):
                for sgn in (-1.0, 1.0):
                    xx = a * (1.0 + sgn * xs[i])
                    x2 = xx * xx
                    asr = -0.5 * (bs / x2 + hk)
                    if asr > -100.0:
                        sp = 1.0 + c * x2 * (1.0 + 5.0 * d * x2)
                        rs = math.sqrt(1.0 - x2)
                        ep = math.exp(-0.5 * hk * x2 / ((1.0 + rs) * (1.0 + rs))) / rs
                        acc += ws[i] * math.exp(asr) * (sp - ep)
            bvn = (a * acc - bvn) / _TWO_PI
        if r > 0.0:
            bvn += ndtr(-max(h, k))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0.0:
                lo = ndtr(k) - ndtr(h)
            else:
                lo = ndtr(-h) - ndtr(-k)
            bvn = lo - bvn
    return min(1.0, max(0.0, bvn))


@njit(cache=True, nogil=True)
def bvn_cdf(a, b, r):
    return _bvnu(-a, -b, r)


@njit(cache=True, nogil=True)
def ndtr_vec(z):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        out[i] = ndtr(z[i])
    return out


@njit(cache=True, nogil=True)
def ndtri_vec(p):
    out = np.empty(p.shape[0])
    for i in range(p.shape[0]):
        out[i] = ndtri(p[i])
    return out


@njit(cache=True, nogil=True)
def bvn_cdf_vec(a, b, r):
    out = np.empty(a.shape[0])
    for i in range(a.shape[0]):
        out[i] = bvn_cdf(a[i], b[i], r[i])
    return out


@njit(cache=True, nogil=True)
def _binary_margin(eta, link):
    """Return (m, 1 - m, Phi^{-1}(m)) for a binary margin, tail-stable."""
    if link == 1:
        m = 1.0 / (1.0 + math.exp(-eta))
        mc = 1.0 / (1.0 + math.exp(eta))
    elif link == 2:
        m = ndtr(eta)
        mc = ndtr(-eta)
        return m, mc, eta
    else:
        ee = math.exp(eta)
        m = -math.expm1(-ee)
        mc = math.exp(-ee)
    if m <= 0.5:
        q = ndtri(m)
    else:
        q = -ndtri(mc)
    return m, mc, q


@njit(cache=True, nogil=True)
def _predictor(z, off, nc, x):
    eta = z[off] + z[off + 1] * x
    if nc == 3:
        eta += z[off + 2] * x * x
    return eta


@njit(cache=True, nogil=True)
def _clip(v, lo, hi):
    return min(hi, max(lo, v))


@njit(cache=True, nogil=True)
def loglik(x, y1, y2, w, z, link1, nc1, link2, nc2):
    """Weighted joint log-likelihood and the number of clamped probabilities."""
    n = x.shape[0]
    pos = nc1 + nc2
    sig1 = 1.0
    sig2 = 1.0
    if link1 == 0:
        sig1 = math.exp(_clip(z[pos], -30.0, 30.0))
        pos += 1
    if link2 == 0:
        sig2 = math.exp(_clip(z[pos], -30.0, 30.0))
        pos += 1
    zr = _clip(z[pos], -12.0, 12.0)
    rho = math.tanh(zr)
    ch = math.cosh(zr)
    one_m_r2 = 1.0 / (ch * ch)
    s = math.sqrt(one_m_r2)
    ll = 0.0
    nclamp = 0
    if link1 != 0 and link2 != 0:
        for i in range(n):
            m1, mc1, q1 = _binary_margin(_predictor(z, 0, nc1, x[i]), link1)
            m2, mc2, q2 = _binary_margin(_predictor(z, nc1, nc2, x[i]), link2)
            p11 = bvn_cdf(q1, q2, rho)
            if y1[i] > 0.5:
                if y2[i] > 0.5:
                    p = p11
                else:
                    p = m1 - p11
            else:
                if y2[i] > 0.5:
                    p = m2 - p11
                else:
                    p = mc1 - m2 + p11
            if p < CLAMP:
                p = CLAMP
                nclamp += 1
            ll += w[i] * math.log(p)
    elif link1 == 0 and link2 == 0:
        const = -_LOG_2PI - math.log(sig1) - math.log(sig2) - 0.5 * math.log(one_m_r2)
        for i in range(n):
            r1 = (y1[i] - _predictor(z, 0, nc1, x[i])) / sig1
            r2 = (y2[i] - _predictor(z, nc1, nc2, x[i])) / sig2
            lc = -(rho * rho * (r1 * r1 + r2 * r2) - 2.0 * rho * r1 * r2) / (2.0 * one_m_r2)
            ll += w[i] * (lc - 0.5 * (r1 * r1 + r2 * r2) + const)
    else:
        if link1 != 0:
            bin_off, bin_nc, bin_link = 0, nc1, link1
            con_off, con_nc, sig = nc1, nc2, sig2
            yb = y1
            yc = y2
        else:
            bin_off, bin_nc, bin_link = nc1, nc2, link2
            con_off, con_nc, sig = 0, nc1, sig1
            yb = y2
            yc = y1
        const = -0.5 * _LOG_2PI - math.log(sig)
        for i in range(n):
            mb, mcb, qb = _binary_margin(_predictor(z, bin_off, bin_nc, x[i]), bin_link)
            r = (yc[i] - _predictor(z, con_off, con_nc, x[i])) / sig
            # Phi^{-1}(P(y_b = 0)) = -qb; Phi^{-1}(F_c(y_c)) = r exactly.
            arg = (-qb - rho * r) / s
            f0 = ndtr(arg)
            f1 = ndtr(-arg)
            if yb[i] > 0.5:
                p = f1
            else:
                p = f0
            if p < CLAMP:
                p = CLAMP
                nclamp += 1
            elif p > 1.0 - CLAMP:
                p = 1.0 - CLAMP
                nclamp += 1
            ll += w[i] * (math.log(p) - 0.5 * r * r + const)
    return ll, nclamp


@njit(cache=True, nogil=True)
def loglik_grad(x, y1, y2, w, z, link1, nc1, link2, nc2, hrel):
    """Central finite-difference gradient with steps ``hrel * (1 + |z_j|)``."""
    p = z.shape[0]
    g = np.empty(p)
    zz = z.copy()
    for j in range(p):
        h = hrel * (1.0 + abs(z[j]))
        zz[j] = z[j] + h
        fp, _ = loglik(x, y1, y2, w, zz, link1, nc1, link2, nc2)
        zz[j] = z[j] - h
        fm, _ = loglik(x, y1, y2, w, zz, link1, nc1, link2, nc2)
        zz[j] = z[j]
        g[j] = (fp - fm) / (2.0 * h)
    return g
