"""Vectorised numpy twins of the numba kernels (same names, same signatures)."""

from __future__ import annotations

import math

import numpy as np
from scipy import special

CLAMP = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi

_GL = {
    6: (np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]),
        np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])),
    12: (np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                   0.5873179542866171, 0.3678314989981802, 0.1252334085114692]),
         np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                   0.2031674267230659, 0.2334925365383547, 0.2491470458134029])),
    20: (np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                   0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                   0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                   0.07652652113349733]),
         np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                   0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                   0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                   0.1527533871307259])),
}


def _full_rule(n):
    x, w = _GL[n]
    return np.concatenate([1.0 - x, 1.0 + x]), np.concatenate([w, w])


def ndtr(z):
    return float(special.ndtr(z))


def ndtri(p):
    return float(special.ndtri(p))


def ndtr_vec(z):
    return special.ndtr(np.asarray(z, dtype=float))


def ndtri_vec(p):
    return special.ndtri(np.asarray(p, dtype=float))


def _bvnu_vec(h, k, r):
    h, k, r = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float),
                                  np.asarray(r, float))
    h = h.astype(float).copy()
    k = k.astype(float).copy()
    r = r.astype(float)
    out = np.zeros(h.shape)
    fin = np.isfinite(h) & np.isfinite(k)

    # infinite limits
    hk_inf = (h == np.inf) | (k == np.inf)
    both_m = (h == -np.inf) & (k == -np.inf)
    out[both_m] = 1.0
    sel = (h == -np.inf) & np.isfinite(k)
    out[sel] = special.ndtr(-k[sel])
    sel = (k == -np.inf) & np.isfinite(h)
    out[sel] = special.ndtr(-h[sel])
    out[hk_inf] = 0.0

    ar = np.abs(r)
    zero = fin & (r == 0.0)
    out[zero] = special.ndtr(-h[zero]) * special.ndtr(-k[zero])

    for n, lo, hi in ((6, 0.0, 0.3), (12, 0.3, 0.75), (20, 0.75, 0.925)):
        sel = fin & (r != 0.0) & (ar >= lo) & (ar < hi)
        if not sel.any():
            continue
        x, w = _full_rule(n)
        hh, kk, rr = h[sel], k[sel], r[sel]
        hs = 0.5 * (hh * hh + kk * kk)
        asr = 0.5 * np.arcsin(rr)
        sn = np.sin(asr[:, None] * x[None, :])
        val = np.exp((sn * (hh * kk)[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ w
        out[sel] = val * asr / _TWO_PI + special.ndtr(-hh) * special.ndtr(-kk)

    sel = fin & (ar >= 0.925)
    if sel.any():
        x, w = _full_rule(20)
        hh, kk, rr = h[sel], k[sel].copy(), r[sel]
        hk = hh * kk
        neg = rr < 0.0
        kk[neg] = -kk[neg]
        hk[neg] = -hk[neg]
        bvn = np.zeros(hh.shape)
        inner = np.abs(rr) < 1.0
        if inner.any():
            hi_, ki, ri, hki = hh[inner], kk[inner], rr[inner], hk[inner]
            a_s = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(a_s)
            bs = (hi_ - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 80.0
            asr = -0.5 * (bs / a_s + hki)
            b0 = np.where(asr > -100.0,
                          a * np.exp(np.minimum(asr, 0.0)) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0
                                                              + c * d * a_s * a_s), 0.0)
            b = np.sqrt(bs)
            sp = math.sqrt(_TWO_PI) * special.ndtr(-b / a)
            b0 = b0 - np.where(hki > -100.0,
                               np.exp(-0.5 * np.minimum(hki, 200.0)) * sp * b
                               * (1.0 - c * bs * (1.0 - d * bs) / 3.0), 0.0)
            a = 0.5 * a
            xs = (a[:, None] * x[None, :]) ** 2
            asr2 = -0.5 * (bs[:, None] / xs + hki[:, None])
            ok = asr2 > -100.0
            sp2 = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
            rs = np.sqrt(1.0 - xs)
            ep = np.exp(-0.5 * hki[:, None] * xs / (1.0 + rs) ** 2) / rs
            terms = np.where(ok, np.exp(np.where(ok, asr2, 0.0)) * (sp2 - ep), 0.0)
            bvn[inner] = (a * (terms @ w) - b0) / _TWO_PI
        pos = rr > 0.0
        bvn[pos] += special.ndtr(-np.maximum(hh[pos], kk[pos]))
        negh = (~pos) & (hh >= kk)
        bvn[negh] = -bvn[negh]
        rest = (~pos) & (hh < kk)
        lo = np.where(hh < 0.0, special.ndtr(kk) - special.ndtr(hh),
                      special.ndtr(-hh) - special.ndtr(-kk))
        bvn[rest] = lo[rest] - bvn[rest]
        out[sel] = bvn
    return np.clip(out, 0.0, 1.0)


def bvn_cdf(a, b, r):
    return float(_bvnu_vec(-np.asarray(a, float), -np.asarray(b, float), r)[()])


def bvn_cdf_vec(a, b, r):
    return _bvnu_vec(-np.asarray(a, float), -np.asarray(b, float), r)


def _binary_margin(eta, link):
    if link == 1:
        m = special.expit(eta)
        mc = special.expit(-eta)
    elif link == 2:
        return special.ndtr(eta), special.ndtr(-eta), eta
    else:
        ee = np.exp(eta)
        m = -np.expm1(-ee)
        mc = np.exp(-ee)
    q = np.where(m <= 0.5, special.ndtri(np.minimum(m, 0.5)),
                 -special.ndtri(np.minimum(mc, 0.5)))
    return m, mc, q


def _predictor(z, off, nc, x):
    eta = z[off] + z[off + 1] * x
    if nc == 3:
        eta = eta + z[off + 2] * x * x
    return eta


def loglik(x, y1, y2, w, z, link1, nc1, link2, nc2):
    pos = nc1 + nc2
    sig1 = sig2 = 1.0
    if link1 == 0:
        sig1 = math.exp(min(30.0, max(-30.0, z[pos])))
        pos += 1
    if link2 == 0:
        sig2 = math.exp(min(30.0, max(-30.0, z[pos])))
        pos += 1
    zr = min(12.0, max(-12.0, z[pos]))
    rho = math.tanh(zr)
    one_m_r2 = 1.0 / math.cosh(zr) ** 2
    s = math.sqrt(one_m_r2)
    if link1 != 0 and link2 != 0:
        m1, mc1, q1 = _binary_margin(_predictor(z, 0, nc1, x), link1)
        m2, mc2, q2 = _binary_margin(_predictor(z, nc1, nc2, x), link2)
        p11 = bvn_cdf_vec(q1, q2, np.full(x.shape, rho))
        b1 = y1 > 0.5
        b2 = y2 > 0.5
        p = np.where(b1, np.where(b2, p11, m1 - p11),
                     np.where(b2, m2 - p11, mc1 - m2 + p11))
        low = p < CLAMP
        p = np.where(low, CLAMP, p)
        return float(np.sum(w * np.log(p))), int(low.sum())
    if link1 == 0 and link2 == 0:
        r1 = (y1 - _predictor(z, 0, nc1, x)) / sig1
        r2 = (y2 - _predictor(z, nc1, nc2, x)) / sig2
        const = -_LOG_2PI - math.log(sig1) - math.log(sig2) - 0.5 * math.log(one_m_r2)
        lc = -(rho * rho * (r1 * r1 + r2 * r2) - 2.0 * rho * r1 * r2) / (2.0 * one_m_r2)
        return float(np.sum(w * (lc - 0.5 * (r1 * r1 + r2 * r2) + const))), 0
    if link1 != 0:
        bin_off, bin_nc, bin_link, con_off, con_nc, sig, yb, yc = 0, nc1, link1, nc1, nc2, sig2, y1, y2
    else:
        bin_off, bin_nc, bin_link, con_off, con_nc, sig, yb, yc = nc1, nc2, link2, 0, nc1, sig1, y2, y1
    mb, mcb, qb = _binary_margin(_predictor(z, bin_off, bin_nc, x), bin_link)
    r = (yc - _predictor(z, con_off, con_nc, x)) / sig
    arg = (-qb - rho * r) / s
    p = np.where(yb > 0.5, special.ndtr(-arg), special.ndtr(arg))
    bad = (p < CLAMP) | (p > 1.0 - CLAMP)
    p = np.clip(p, CLAMP, 1.0 - CLAMP)
    const = -0.5 * _LOG_2PI - math.log(sig)
    return float(np.sum(w * (np.log(p) - 0.5 * r * r + const))), int(bad.sum())


def loglik_grad(x, y1, y2, w, z, link1, nc1, link2, nc2, hrel):
    g = np.empty(z.shape[0])
    zz = z.copy()
    for j in range(z.shape[0]):
        h = hrel * (1.0 + abs(z[j]))
        zz[j] = z[j] + h
        fp, _ = loglik(x, y1, y2, w, zz, link1, nc1, link2, nc2)
        zz[j] = z[j] - h
        fm, _ = loglik(x, y1, y2, w, zz, link1, nc1, link2, nc2)
        zz[j] = z[j]
        g[j] = (fp - fm) / (2.0 * h)
    return g
