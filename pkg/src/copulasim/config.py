"""Flat ``key = value`` run configuration with schema validation.

Keys (defaults in brackets)::

    outcomes      kinds of y1,y2: continuous|binary, comma separated  [required]
    epsilon       one threshold, or one per outcome                    [required]
    y1, y2        margin of that outcome for both groups, family/link/curve
                  [gaussian/identity/linear or bernoulli/logit/linear]
    group1.y1 ... per-group margin overrides                          [y1, y2]
    method        similarity | iut                                     [similarity]
    alpha         test level                                           [0.05]
    n_boot        bootstrap replicates                                 [300]
    grid_points   dose grid size                                       [101]
    grid_lower    lower end of the dose grid                           [smallest dose]
    grid_upper    upper end of the dose grid                           [largest dose]
    seed          master seed                                          [1]
    threads       worker threads                                       [available cores]
    output        JSON report path                                     [none]
    plot          plot-ready CSV path (distance command)               [none]
    mle_maxiter, mle_gtol, al_max_outer, al_inner_maxiter, constraint_tol
                  optimizer settings                                   [library defaults]
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
import hashlib
import json
import os
from pathlib import Path

from .dataio import SchemaError
from .estimation import DEFAULT_SETTINGS, OptimizerSettings
from .likelihood import BINARY, CONTINUOUS
from .model import MarginSpec

_OPT_KEYS = {"mle_maxiter": int, "mle_gtol": float, "al_max_outer": int,
             "al_inner_maxiter": int, "constraint_tol": float}
_KEYS = {"outcomes", "epsilon", "y1", "y2", "group1.y1", "group1.y2", "group2.y1", "group2.y2",
         "method", "alpha", "n_boot", "grid_points", "grid_lower", "grid_upper", "seed",
         "threads", "output", "plot", *_OPT_KEYS}
_DEFAULT_MARGIN = {CONTINUOUS: "gaussian/identity/linear", BINARY: "bernoulli/logit/linear"}


def parse_kv(text: str, source: str | None = None, keys=None) -> dict:
    """``{key: (value, line)}`` from flat config text; ``#`` starts a comment."""
    keys = _KEYS if keys is None else keys
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"expected 'key = value', got {line!r}", lineno, source)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in keys:
            raise SchemaError(f"unknown key {key!r}", lineno, source)
        if key in out:
            raise SchemaError(f"duplicate key {key!r} (first on line {out[key][1]})", lineno, source)
        if not value:
            raise SchemaError(f"empty value for {key!r}", lineno, source)
        out[key] = (value, lineno)
    return out


@dataclass(frozen=True)
class RunConfig:
    kinds: tuple
    epsilon: tuple
    margins: tuple  # ((g1 y1, g1 y2), (g2 y1, g2 y2)) as MarginSpec
    method: str = "similarity"
    alpha: float = 0.05
    n_boot: int = 300
    grid_points: int = 101
    grid_lower: float | None = None
    grid_upper: float | None = None
    seed: int = 1
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    output: str | None = None
    plot: str | None = None
    settings: OptimizerSettings = DEFAULT_SETTINGS

    def to_dict(self, include_runtime: bool = False) -> dict:
        """Canonical form; threads and output paths only with ``include_runtime``."""
        d = {
            "outcomes": list(self.kinds),
            "epsilon": list(self.epsilon),
            "margins": [[str(m) for m in g] for g in self.margins],
            "method": self.method, "alpha": self.alpha, "n_boot": self.n_boot,
            "grid_points": self.grid_points, "grid_lower": self.grid_lower,
            "grid_upper": self.grid_upper, "seed": self.seed,
            "settings": {k: v for k, v in asdict(self.settings).items() if k in _OPT_KEYS},
        }
        if include_runtime:
            d.update(threads=self.threads, output=self.output, plot=self.plot)
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _num(kind, value, key, line, source):
    try:
        return kind(value)
    except ValueError:
        raise SchemaError(f"{key} must be {kind.__name__}, got {value!r}", line, source) from None


def build_config(entries: dict, source: str | None = None) -> RunConfig:
    """Validate ``{key: (value, line)}`` entries (line may be None for CLI flags)."""
    def get(key):
        return entries.get(key, (None, None))

    value, line = get("outcomes")
    if value is None:
        raise SchemaError("missing required key 'outcomes'", None, source)
    kinds = tuple(v.strip().lower() for v in value.split(","))
    if len(kinds) != 2 or any(k not in (BINARY, CONTINUOUS) for k in kinds):
        raise SchemaError(f"outcomes must be two of continuous/binary, got {value!r}", line, source)

    value, line = get("epsilon")
    if value is None:
        raise SchemaError("missing required key 'epsilon'", None, source)
    eps = tuple(_num(float, v.strip(), "epsilon", line, source) for v in value.split(","))
    if len(eps) not in (1, 2) or any(not e > 0 for e in eps):
        raise SchemaError("epsilon must be one or two positive numbers", line, source)

    margins = []
    for g in (1, 2):
        row = []
        for k, kind in enumerate(kinds, start=1):
            value, line = entries.get(f"group{g}.y{k}", entries.get(f"y{k}", (_DEFAULT_MARGIN[kind], None)))
            try:
                spec = MarginSpec.parse(value)
            except ValueError as exc:
                raise SchemaError(str(exc), line, source) from None
            if spec.is_binary != (kind == BINARY):
                raise SchemaError(f"margin {spec} does not fit a {kind} outcome", line, source)
            row.append(spec)
        margins.append(tuple(row))

    kw = {}
    for key, typ in (("alpha", float), ("n_boot", int), ("grid_points", int), ("grid_lower", float),
                     ("grid_upper", float), ("seed", int), ("threads", int)):
        value, line = get(key)
        if value is not None:
            kw[key] = _num(typ, value, key, line, source)
    for key in ("output", "plot"):
        if get(key)[0] is not None:
            kw[key] = get(key)[0]
    value, line = get("method")
    if value is not None:
        if value not in ("similarity", "iut"):
            raise SchemaError(f"method must be similarity or iut, got {value!r}", line, source)
        kw["method"] = value
    opt = {}
    for key, typ in _OPT_KEYS.items():
        value, line = get(key)
        if value is not None:
            opt[key] = _num(typ, value, key, line, source)
    if opt:
        kw["settings"] = replace(DEFAULT_SETTINGS, **opt)

    def line_of(key):
        return get(key)[1]

    if not 0.0 < kw.get("alpha", 0.05) < 0.5:
        raise SchemaError("alpha must lie in (0, 0.5)", line_of("alpha"), source)
    if kw.get("n_boot", 300) * kw.get("alpha", 0.05) < 1:
        raise SchemaError("n_boot * alpha must be at least 1", line_of("n_boot"), source)
    if kw.get("grid_points", 101) < 2:
        raise SchemaError("grid_points must be at least 2", line_of("grid_points"), source)
    if kw.get("threads", 1) < 1:
        raise SchemaError("threads must be positive", line_of("threads"), source)
    lo, hi = kw.get("grid_lower"), kw.get("grid_upper")
    if lo is not None and hi is not None and not hi > lo:
        raise SchemaError("grid_upper must exceed grid_lower", line_of("grid_upper"), source)
    if kw.get("method") == "iut" and len(eps) != 2:
        raise SchemaError("method iut needs one epsilon per outcome", line_of("epsilon"), source)
    if len(eps) == 2 and len(set(eps)) == 2 and all(k == BINARY for k in kinds):
        raise SchemaError("different thresholds need a continuous outcome to rescale",
                          line_of("epsilon"), source)
    return RunConfig(kinds, eps, tuple(margins), **kw)


def load_config(path=None, overrides: dict | None = None, text: str | None = None) -> RunConfig:
    """Read a config file (or text), then apply CLI ``overrides`` (plain values)."""
    source = None
    entries = {}
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise SchemaError(f"cannot read config: {exc.strerror}", None, source) from None
    if text is not None:
        entries = parse_kv(text, source)
    for key, value in (overrides or {}).items():
        if value is not None:
            entries[key] = (str(value), None)
    return build_config(entries, source)


def global_epsilon(kinds, eps) -> float:
    """Common threshold for the maximum statistic.

    A binary outcome cannot be rescaled, so its threshold is used when
    present; otherwise the smallest threshold.
    """
    if len(eps) == 1:
        return eps[0]
    binary = [e for k, e in zip(kinds, eps) if k == BINARY]
    return binary[0] if binary else min(eps)


def rescale_factors(kinds, eps) -> tuple:
    """Multiplier per outcome mapping its threshold onto the global one."""
    if len(eps) == 1:
        return (1.0, 1.0)
    g = global_epsilon(kinds, eps)
    return tuple(g / e if k == CONTINUOUS else 1.0 for k, e in zip(kinds, eps))
