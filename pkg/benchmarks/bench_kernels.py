"""Compare the numba and numpy kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20]

Each kernel is timed on both backends with identical inputs (the numba
version is compiled first, outside the timing), and the speed-up and the
largest absolute difference between the two results are printed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from copulasim import _kernels_nb as nb
from copulasim import _kernels_np as npk
from copulasim import casestudy
from copulasim.datagen import GroupGenSpec, RngStream, simulate_group
from copulasim.estimation import fit_mle
from copulasim.likelihood import Objective
from copulasim.model import ParamVector, bernoulli, transform_params


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    a, b = rng.normal(0, 2, 100_000), rng.normal(0, 2, 100_000)
    yield "ndtr_vec (1e5)", lambda k: k.ndtr_vec(a)
    u = rng.uniform(1e-12, 1 - 1e-12, 100_000)
    yield "ndtri_vec (1e5)", lambda k: k.ndtri_vec(u)
    r = np.full_like(a, 0.6)
    yield "bvn_cdf_vec (1e5)", lambda k: k.bvn_cdf_vec(a, b, r)

    s1, _ = casestudy.load_case_study()
    mixed = Objective(s1, casestudy.SPECS)
    zm = transform_params(fit_mle(s1, casestudy.SPECS).params)
    specs = (bernoulli(), bernoulli())
    p = ParamVector(((-1.0, 2.0), (-3.0, 3.0)), (None, None), 0.3)
    sb = simulate_group(GroupGenSpec(specs, p, sizes=(50,)), RngStream(1))
    binbin = Objective(sb, specs)
    zb = transform_params(p)
    for label, obj, z in (("mixed, n=150", mixed, zm), ("bin-bin, n=350", binbin, zb)):
        args = (obj.x, obj.y1, obj.y2, obj.w, z)
        yield f"loglik ({label})", lambda k, a=args, o=obj: k.loglik(*a, *o.args)[0]
        yield f"loglik_grad ({label})", lambda k, a=args, o=obj: k.loglik_grad(*a, *o.args, 1e-6)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    print(f"{'kernel':32s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speed-up':>9s} {'max |diff|':>11s}")
    for name, fn in cases():
        ref = np.asarray(fn(npk))
        got = np.asarray(fn(nb))  # compile
        t_np = best_of(lambda: fn(npk), args.repeat)
        t_nb = best_of(lambda: fn(nb), args.repeat)
        diff = float(np.max(np.abs(ref - got)))
        print(f"{name:32s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:9.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
