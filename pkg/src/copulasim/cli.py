"""Command-line interface: ``copulasim {test,distance,simulate,gen-data}``.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
from pathlib import Path
import sys
from importlib import resources

import numpy as np

from . import __version__, casestudy
from ._accel import backend_name
from .config import RunConfig, global_epsilon, load_config, parse_kv, rescale_factors
from .datagen import DATA, GroupGenSpec, InfeasibleCorrelation, RngStream, simulate_group
from .dataio import SchemaError, format_dataset, parse_dataset
from .estimation import FitError, fit_mle
from .likelihood import BINARY, CONTINUOUS, GroupSample
from .model import DoseGrid, MarginSpec, ParamVector, curve_distances, eval_curve
from .simharness import (
    KINDS,
    Scenario,
    ScenarioError,
    run_scenario,
    scenario_presets,
    select_rows,
    with_overrides,
)
from .testing import BootstrapError, TestConfig, iut_test, similarity_test

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("copulasim")


class InputError(Exception):
    pass


def _bundled(name: str) -> str:
    return resources.files("copulasim.data").joinpath(name).read_text()


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# --- shared setup -----------------------------------------------------------

def _load_inputs(args) -> tuple:
    """(config, data text, data label) for ``test`` and ``distance``."""
    overrides = {
        "epsilon": getattr(args, "epsilon", None), "alpha": getattr(args, "alpha", None),
        "n_boot": getattr(args, "n_boot", None), "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", None), "output": getattr(args, "output", None),
        "plot": getattr(args, "plot", None), "method": getattr(args, "method", None),
        "grid_points": getattr(args, "grid_points", None),
    }
    if args.case_study:
        if args.data is not None:
            raise InputError("give either a data file or --case-study, not both")
        cfg_text = None if args.config else _bundled("case_study.cfg")
        cfg = load_config(args.config, overrides, text=cfg_text)
        return cfg, _bundled(casestudy.DATA_FILE), "bundled:" + casestudy.DATA_FILE
    if args.data is None:
        raise InputError("a data file (or --case-study) is required")
    cfg = load_config(args.config, overrides)
    try:
        text = Path(args.data).read_text()
    except OSError as exc:
        raise InputError(f"{args.data}: {exc.strerror}") from None
    return cfg, text, str(args.data)


def _prepare(cfg: RunConfig, text: str, label: str) -> tuple:
    """Parse the data and apply the per-outcome threshold rescaling."""
    s1, s2 = parse_dataset(text, cfg.kinds, source=label)
    factors = rescale_factors(cfg.kinds, cfg.epsilon) if cfg.method == "similarity" else (1.0, 1.0)

    def scale(s):
        return GroupSample(s.dose, s.y1 * factors[0], s.y2 * factors[1], s.kinds)

    return scale(s1), scale(s2), factors


def _grid(cfg: RunConfig, s1, s2) -> DoseGrid:
    lo = cfg.grid_lower if cfg.grid_lower is not None else min(s1.dose.min(), s2.dose.min())
    hi = cfg.grid_upper if cfg.grid_upper is not None else max(s1.dose.max(), s2.dose.max())
    return DoseGrid.linspace(float(lo), float(hi), cfg.grid_points)


def _fit_report(fit, specs) -> dict:
    p = fit.params
    return {
        "outcomes": [{"margin": str(s), "coef": [float(v) for v in c]} for s, c in zip(specs, p.coef)],
        "sigma": [None if v is None else float(v) for v in p.sigma],
        "rho": float(p.rho),
        "loglik": float(fit.loglik),
        "status": fit.status,
        "iterations": int(fit.n_iter),
        "clamped": int(fit.n_clamped),
        "separated": bool(fit.separated),
    }


def _fits(cfg, s1, s2) -> tuple:
    fits = []
    for g, (s, sp) in enumerate(zip((s1, s2), cfg.margins), start=1):
        f = fit_mle(s, sp, settings=cfg.settings)
        if not f.ok:
            raise FitError(f"MLE for group {g} did not converge: status {f.status}, "
                           f"gradient sup-norm {f.grad_norm:.3g}, clamped terms {f.n_clamped}")
        fits.append(f)
    return tuple(fits)


def _provenance(cfg: RunConfig, text: str, label: str, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "backend": backend_name(),
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "data": {"source": label, "sha256": _sha256(text)},
    }


def _distance_block(dist, factors) -> dict:
    d = dist.as_dict()
    d["original_scale"] = [v / f for v, f in zip(d["d"], [factors[k] for k in range(len(d["d"]))])]
    return d


def _write(path, content: str):
    Path(path).write_text(content)


# --- commands ---------------------------------------------------------------

def cmd_distance(args) -> int:
    cfg, text, label = _load_inputs(args)
    s1, s2, factors = _prepare(cfg, text, label)
    fits = _fits(cfg, s1, s2)
    grid = _grid(cfg, s1, s2)
    dist = curve_distances(cfg.margins[0], fits[0].params, cfg.margins[1], fits[1].params, grid)
    report = _provenance(cfg, text, label, "distance")
    report["rescale_factors"] = list(factors)
    report["fits"] = {f"group{g}": _fit_report(f, sp) for g, (f, sp) in
                      enumerate(zip(fits, cfg.margins), start=1)}
    report["distances"] = _distance_block(dist, factors)
    if cfg.plot:
        _write(cfg.plot, plot_csv(cfg, fits, grid))
    if cfg.output:
        _write(cfg.output, _dump(report))
    for k, (d, x) in enumerate(zip(dist.d, dist.argmax_dose), start=1):
        print(f"outcome {k}: d = {d:.4f} at dose {x:.4g}")
    print(f"d_max = {dist.d_max:.4f} (outcome {dist.outcome + 1})")
    return EXIT_OK


def plot_csv(cfg: RunConfig, fits, grid: DoseGrid) -> str:
    """Long format: one row per (outcome, grid dose)."""
    rows = ["outcome,dose,group1,group2,abs_diff"]
    for k in range(2):
        m1 = eval_curve(cfg.margins[0][k], fits[0].params.coef[k], grid.points)
        m2 = eval_curve(cfg.margins[1][k], fits[1].params.coef[k], grid.points)
        for x, a, b in zip(grid.points, m1, m2):
            rows.append(f"{k + 1},{float(x)!r},{float(a)!r},{float(b)!r},{abs(float(a) - float(b))!r}")
    return "\n".join(rows) + "\n"


def cmd_test(args) -> int:
    cfg, text, label = _load_inputs(args)
    s1, s2, factors = _prepare(cfg, text, label)
    fits = _fits(cfg, s1, s2)
    grid = _grid(cfg, s1, s2)
    report = _provenance(cfg, text, label, "test")
    report["fits"] = {f"group{g}": _fit_report(f, sp) for g, (f, sp) in
                      enumerate(zip(fits, cfg.margins), start=1)}
    if cfg.method == "iut":
        tc = TestConfig(cfg.epsilon[0], cfg.alpha, cfg.n_boot, grid, cfg.grid_points, cfg.seed,
                        cfg.settings, cfg.threads)
        res = iut_test(s1, s2, cfg.margins[0], cfg.margins[1], cfg.epsilon, tc)
        report["iut"] = res.as_dict()
        for k, r in enumerate(res.results, start=1):
            print(f"outcome {k}: eps = {r.epsilon:g}, d_hat = {r.d_hat_max:.4f}, "
                  f"critical value = {r.critical_value:.4f}, p = {r.p_value:.3f}")
        print("decision:", "reject H0 (similar)" if res.reject else "fail to reject H0")
    else:
        eps = global_epsilon(cfg.kinds, cfg.epsilon)
        tc = TestConfig(eps, cfg.alpha, cfg.n_boot, grid, cfg.grid_points, cfg.seed,
                        cfg.settings, cfg.threads)
        res = similarity_test(s1, s2, cfg.margins[0], cfg.margins[1], tc, mle=fits)
        report["rescaling"] = {"epsilon_per_outcome": list(cfg.epsilon), "epsilon_global": eps,
                               "factors": list(factors)}
        report["distances"] = _distance_block(res.distances, factors)
        report["test"] = res.as_dict()
        for k, (d, x) in enumerate(zip(res.distances.d, res.distances.argmax_dose), start=1):
            print(f"outcome {k}: d = {d:.4f} at dose {x:.4g}")
        print(f"eps = {eps:g}, d_max = {res.d_hat_max:.4f}, critical value "
              f"(order statistic {res.quantile_index}) = {res.critical_value:.4f}, "
              f"p = {res.p_value:.3f}, failed refits = {res.n_failed}")
        print("decision:", "reject H0 (similar)" if res.reject else "fail to reject H0")
    if cfg.output:
        _write(cfg.output, _dump(report))
    return EXIT_OK


# --- simulate ---------------------------------------------------------------

_SCENARIO_COLUMNS = ("name", "kind", "epsilon", "d1", "d2", "n_g", "rho", "sigma2", "theta1", "theta2")
RESULT_COLUMNS = ("scenario", "kind", "epsilon", "d1", "d2", "n_g", "rho", "sigma2", "replicates",
                  "rejected", "failed", "rate", "se", "reference")


def _parse_theta(text: str) -> tuple:
    """``"b0 b1 | b0 b1 b2"`` -> per-outcome coefficient tuples."""
    return tuple(tuple(float(v) for v in part.split()) for part in text.split("|"))


def read_scenarios(path) -> list:
    """Scenario CSV with columns name,kind,epsilon,d1,d2,n_g,rho,sigma2,theta1,theta2."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(c.strip() for c in rows[0]) != _SCENARIO_COLUMNS:
        raise SchemaError(f"header must be {','.join(_SCENARIO_COLUMNS)}", 1, str(path))
    out = []
    for lineno, rec in enumerate(rows[1:], start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(_SCENARIO_COLUMNS):
            raise SchemaError(f"expected {len(_SCENARIO_COLUMNS)} fields", lineno, str(path))
        r = dict(zip(_SCENARIO_COLUMNS, (c.strip() for c in rec)))
        try:
            out.append(Scenario(
                name=r["name"], kind=r["kind"], epsilon=float(r["epsilon"]),
                d=(float(r["d1"]), float(r["d2"])), n_g=int(r["n_g"]), rho=float(r["rho"]),
                sigma2=None if r["sigma2"] in ("", "-") else float(r["sigma2"]),
                theta1=_parse_theta(r["theta1"]), theta2=_parse_theta(r["theta2"])))
        except (ValueError, ScenarioError) as exc:
            raise SchemaError(str(exc), lineno, str(path)) from None
    if not out:
        raise SchemaError("no scenarios", None, str(path))
    return out


def _read_log(path) -> dict:
    """Completed replicate decisions from the per-replicate log."""
    done = {}
    p = Path(path)
    if not p.exists():
        return done
    with p.open() as fh:
        for rec in csv.DictReader(fh):
            try:
                dec = {"1": True, "0": False, "fail": None}[rec["decision"]]
                done.setdefault(rec["scenario"], {})[int(rec["replicate"])] = dec
            except (KeyError, ValueError):
                continue  # a truncated last line from an interrupted run
    return done


def cmd_simulate(args) -> int:
    if (args.preset is None) == (args.scenarios is None):
        raise InputError("give exactly one of --preset or --scenarios")
    if args.preset is not None:
        presets = scenario_presets()
        if args.preset not in presets:
            raise InputError(f"unknown preset {args.preset!r}; available: {', '.join(sorted(presets))}")
        scen = presets[args.preset]
    else:
        scen = read_scenarios(args.scenarios)
    try:
        scen = select_rows(scen, args.rows)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    scen = [with_overrides(s, n_replicates=args.replicates, n_boot=args.n_boot, seed=args.seed)
            for s in scen]
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(out.suffix + ".replicates.csv")
    done = _read_log(log_path)
    new_log = not log_path.exists()
    threads = args.threads or os.cpu_count() or 1
    results = []
    with log_path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new_log:
            w.writerow(("scenario", "replicate", "decision"))

        for s in scen:
            def record(r, dec, _name=s.name):
                w.writerow((_name, r, "fail" if dec is None else int(dec)))
                fh.flush()

            oc = run_scenario(s, threads=threads, done=done.get(s.name), on_replicate=record)
            results.append((s, oc))
            ref = "" if oc.reference is None else f" (reference {oc.reference:.3f})"
            print(f"{s.name}: rate {oc.rate:.3f} +/- {oc.se:.3f} over {oc.n_replicates} replicates{ref}")
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for s, oc in results:
            w.writerow((s.name, s.kind, s.epsilon, s.d[0], s.d[1], s.n_g, s.rho,
                        "" if s.sigma2 is None else s.sigma2, oc.n_replicates, oc.n_rejected,
                        oc.n_failed, repr(oc.rate), repr(oc.se),
                        "" if oc.reference is None else oc.reference))
    return EXIT_OK


# --- gen-data ---------------------------------------------------------------

_GEN_KEYS = {"outcomes", "rho_scale", "y1", "y2",
             *(f"group{g}.{k}" for g in (1, 2) for k in ("y1", "y2", "coef", "sigma", "rho", "doses", "n"))}


def _floats(text, key, line, source) -> list:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise SchemaError(f"{key}: expected numbers, got {text!r}", line, source) from None


def load_gen_spec(path) -> tuple:
    """Generative spec file -> (GroupGenSpec for group 1, group 2)."""
    source = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    e = parse_kv(text, source, keys=_GEN_KEYS)

    def need(key):
        if key not in e:
            raise SchemaError(f"missing required key {key!r}", None, source)
        return e[key]

    value, line = need("outcomes")
    kinds = tuple(v.strip() for v in value.split(","))
    if len(kinds) != 2 or any(k not in (BINARY, CONTINUOUS) for k in kinds):
        raise SchemaError("outcomes must be two of continuous/binary", line, source)
    rho_scale = e.get("rho_scale", ("latent", None))[0]
    if rho_scale not in ("latent", "observed"):
        raise SchemaError("rho_scale must be latent or observed", e["rho_scale"][1], source)
    default = {CONTINUOUS: "gaussian/identity/linear", BINARY: "bernoulli/logit/linear"}
    out = []
    for g in (1, 2):
        specs = []
        for k, kind in enumerate(kinds, start=1):
            value, line = e.get(f"group{g}.y{k}", e.get(f"y{k}", (default[kind], None)))
            try:
                specs.append(MarginSpec.parse(value))
            except ValueError as exc:
                raise SchemaError(str(exc), line, source) from None
            if specs[-1].is_binary != (kind == BINARY):
                raise SchemaError(f"margin {value} does not fit a {kind} outcome", line, source)
        value, line = need(f"group{g}.coef")
        parts = value.split("|")
        if len(parts) != 2:
            raise SchemaError("coef must list both outcomes separated by '|'", line, source)
        coef = [_floats(p, "coef", line, source) for p in parts]
        n_cont = sum(not s.is_binary for s in specs)
        sig_text, sig_line = e.get(f"group{g}.sigma", ("", None))
        sig = _floats(sig_text, "sigma", sig_line, source)
        if len(sig) != n_cont:
            raise SchemaError(f"group{g}.sigma needs {n_cont} value(s)", sig_line, source)
        it = iter(sig)
        sigma = tuple(None if s.is_binary else next(it) for s in specs)
        value, line = need(f"group{g}.rho")
        rho = _floats(value, "rho", line, source)
        doses_v, doses_l = need(f"group{g}.doses")
        doses = _floats(doses_v, "doses", doses_l, source)
        n_v, n_l = e.get(f"group{g}.n", ("30", None))
        try:
            sizes = tuple(int(v) for v in n_v.replace(",", " ").split())
            out.append(GroupGenSpec(tuple(specs), ParamVector(tuple(coef), sigma, rho[0]),
                                    tuple(doses), sizes, rho_scale))
        except ValueError as exc:
            raise SchemaError(str(exc), n_l or line, source) from None
    return tuple(out)


def cmd_gen_data(args) -> int:
    if args.case_study == (args.spec is not None):
        raise InputError("give exactly one of --case-study or --spec")
    if args.calibrate and not args.case_study:
        raise InputError("--calibrate applies to --case-study only")
    if args.case_study:
        if args.calibrate:
            if args.seed is not None:
                seeds = (args.seed, args.seed)
            else:
                seeds = casestudy.SURROGATE_SEEDS
            s1, s2 = casestudy.calibrated_case_study(seeds)
        else:
            s1, s2 = casestudy.simulate_case_study(args.seed if args.seed is not None
                                                   else casestudy.SURROGATE_SEED)
    else:
        g1, g2 = load_gen_spec(args.spec)
        seed = 1 if args.seed is None else args.seed
        s1 = simulate_group(g1, RngStream(seed, 0, 1, DATA))
        s2 = simulate_group(g2, RngStream(seed, 0, 2, DATA))
    text = format_dataset(s1, s2)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def _data_args(p):
    p.add_argument("data", nargs="?", help="CSV with header group,dose,y1,y2")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--case-study", action="store_true",
                   help="use the bundled case-study data and config")
    p.add_argument("--epsilon", help="threshold, or two comma-separated per-outcome thresholds")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--output", help="JSON report path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="copulasim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run the bootstrap similarity test")
    _data_args(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--method", choices=("similarity", "iut"))
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("distance", help="fit both groups and report curve distances")
    _data_args(p)
    p.add_argument("--plot", help="plot-ready CSV of the fitted curves")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("simulate", help="estimate rejection rates over simulation scenarios")
    p.add_argument("--preset", help="named scenario set (table1, table2, table3, power-*)")
    p.add_argument("--scenarios", help="scenario CSV file")
    p.add_argument("--rows", help="1-based rows to run, e.g. 1,4-6")
    p.add_argument("--replicates", type=int)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", default="simulation.csv", help="result CSV")
    p.add_argument("--log", help="per-replicate decision log (default: <out>.replicates.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-data", help="generate a two-group dataset")
    p.add_argument("--case-study", action="store_true", help="case-study design and coefficients")
    p.add_argument("--calibrate", action="store_true",
                   help="adjust the draw so refitting returns the published coefficients")
    p.add_argument("--spec", help="generative spec file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output CSV (default stdout)")
    p.set_defaults(func=cmd_gen_data)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SchemaError, InputError, InfeasibleCorrelation, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, BootstrapError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
