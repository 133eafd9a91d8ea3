"""Run configuration: a TOML document with sections cavity, pump, filter, run, output and sweep.

Example::

    [cavity]
    n_max = 30
    kappa = 1.0
    n_th = 0.1

    [pump]
    theta = 1.0
    period = 0.05
    probabilities = { 1 = 1.0 }

    [filter]
    kind = "rectangular"
    width = 0.5            # defaults to 10 * period

    [run]
    mode = "compare"       # micro | macro | compare | stochastic | sweep
    n_periods = 1000

    [output]
    path = "out/compare.csv"

Unknown keys are rejected.  Every violation in a document is reported, not
only the first.
"""
from __future__ import annotations

import copy
import dataclasses
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .micro import FILTER_KINDS

MODES = ("micro", "macro", "compare", "stochastic", "sweep")
METHODS = ("spectral", "series")
_INITIAL = re.compile(r"^(vacuum|thermal|fock:(\d+))$")


@dataclass
class SimulationConfig:
    # cavity
    n_max: int
    kappa: float
    theta: float
    period: float
    probabilities: dict[int, float]
    mode: str
    n_periods: int
    n_th: float = 0.0
    composition: str = "sequential"
    filter_kind: str = "rectangular"
    filter_width: float | None = None
    samples_per_period: int = 8
    method: str = "spectral"
    l_max: int | None = None
    tail_tol: float = 1e-10
    kernel_tol: float | None = None
    seed: int = 0
    realizations: int = 1
    initial: str = "vacuum"
    identify_initial: bool = False
    workers: int = 1
    sweep_mode: str = "macro"
    gates: bool = True
    compare_tolerance: float | None = None
    output_path: str | None = None
    figure: bool = True
    json: bool = True
    sweep: dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        if self.filter_width is None:
            self.filter_width = 10.0 * self.period

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(copy.deepcopy(self), **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["probabilities"] = {str(k): v for k, v in self.probabilities.items()}
        return d


# section -> {document key: (field name, type, default-present)}
SCHEMA: dict[str, dict[str, tuple[str, type]]] = {
    "cavity": {"n_max": ("n_max", int), "kappa": ("kappa", float), "n_th": ("n_th", float)},
    "pump": {
        "theta": ("theta", float),
        "period": ("period", float),
        "probabilities": ("probabilities", dict),
        "composition": ("composition", str),
    },
    "filter": {"kind": ("filter_kind", str), "width": ("filter_width", float)},
    "run": {
        "mode": ("mode", str),
        "n_periods": ("n_periods", int),
        "samples_per_period": ("samples_per_period", int),
        "method": ("method", str),
        "l_max": ("l_max", int),
        "tail_tol": ("tail_tol", float),
        "kernel_tol": ("kernel_tol", float),
        "seed": ("seed", int),
        "realizations": ("realizations", int),
        "initial": ("initial", str),
        "identify_initial": ("identify_initial", bool),
        "workers": ("workers", int),
        "sweep_mode": ("sweep_mode", str),
        "gates": ("gates", bool),
        "compare_tolerance": ("compare_tolerance", float),
    },
    "output": {"path": ("output_path", str), "figure": ("figure", bool), "json": ("json", bool)},
}
REQUIRED = ("n_max", "kappa", "theta", "period", "probabilities", "mode", "n_periods")
#: dotted names a sweep may vary
SWEEPABLE = {f"{sec}.{key}": spec for sec, keys in SCHEMA.items() for key, spec in keys.items()}
for _k in ("pump.probabilities", "run.mode", "run.workers", "output.path", "output.figure", "output.json"):
    SWEEPABLE.pop(_k)


def _coerce(value, typ, where: str, problems: list):
    if typ is bool:
        if isinstance(value, bool):
            return value
    elif typ is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif typ is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif typ is str:
        if isinstance(value, str):
            return value
    elif typ is dict:
        if isinstance(value, dict):
            return value
    problems.append(f"{where}: expected {typ.__name__}, got {type(value).__name__} {value!r}")
    return None


def _probabilities(table: dict, problems: list) -> dict[int, float] | None:
    out = {}
    for k, p in table.items():
        try:
            kk = int(k)
        except ValueError:
            problems.append(f"pump.probabilities: atom count {k!r} is not an integer")
            continue
        if kk < 0:
            problems.append(f"pump.probabilities: atom count {kk} is negative")
            continue
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            problems.append(f"pump.probabilities: p_{kk} is not a number")
            continue
        if not 0 <= p <= 1:
            problems.append(f"pump.probabilities: p_{kk} = {p} outside [0, 1]")
        out[kk] = float(p)
    if out:
        total = math.fsum(out.values())
        if abs(total - 1) > 1e-12:
            problems.append(f"injection probabilities sum to {total:.12g}")
    else:
        problems.append("pump.probabilities: empty table")
    return out


def validate(cfg: SimulationConfig) -> list[str]:
    """All semantic violations of a config (empty when valid)."""
    problems = []
    if cfg.n_max < 1:
        problems.append(f"cavity.n_max must be >= 1, got {cfg.n_max}")
    if not cfg.kappa >= 0:
        problems.append(f"cavity.kappa must be >= 0, got {cfg.kappa}")
    if not cfg.n_th >= 0:
        problems.append(f"cavity.n_th must be >= 0, got {cfg.n_th}")
    if not cfg.theta >= 0:
        problems.append(f"pump.theta must be >= 0, got {cfg.theta}")
    if not cfg.period > 0:
        problems.append(f"pump.period must be > 0, got {cfg.period}")
    if cfg.composition != "sequential":
        problems.append(f"pump.composition {cfg.composition!r} not supported (only 'sequential')")
    if cfg.filter_kind not in FILTER_KINDS or cfg.filter_kind == "custom":
        problems.append(f"filter.kind must be one of rectangular, triangular, gaussian-truncated")
    if cfg.period > 0 and cfg.filter_width is not None:
        if not cfg.filter_width > 0:
            problems.append("filter.width must be > 0")
        elif cfg.filter_width < cfg.period * (1 - 1e-12):
            problems.append("filter width below injection period")
        else:
            ratio = cfg.filter_width * cfg.samples_per_period / cfg.period
            if cfg.samples_per_period >= 1 and abs(ratio - round(ratio)) > 1e-9 * ratio:
                problems.append("filter width is not a multiple of the sample step period/samples_per_period")
    if cfg.mode not in MODES:
        problems.append(f"run.mode must be one of {', '.join(MODES)}, got {cfg.mode!r}")
    if cfg.n_periods < 1:
        problems.append(f"run.n_periods must be >= 1, got {cfg.n_periods}")
    if cfg.samples_per_period < 1:
        problems.append(f"run.samples_per_period must be >= 1, got {cfg.samples_per_period}")
    if cfg.method not in METHODS:
        problems.append(f"run.method must be spectral or series, got {cfg.method!r}")
    if cfg.l_max is not None and cfg.l_max < 1:
        problems.append(f"run.l_max must be >= 1, got {cfg.l_max}")
    if not cfg.tail_tol > 0:
        problems.append("run.tail_tol must be > 0")
    if cfg.realizations < 1:
        problems.append("run.realizations must be >= 1")
    if cfg.workers < 1:
        problems.append("run.workers must be >= 1")
    m = _INITIAL.match(cfg.initial)
    if not m:
        problems.append(f"run.initial must be vacuum, thermal or fock:N, got {cfg.initial!r}")
    elif m.group(2) is not None and int(m.group(2)) > cfg.n_max:
        problems.append(f"run.initial Fock level {m.group(2)} exceeds n_max")
    if cfg.sweep_mode not in ("micro", "macro", "compare", "stochastic"):
        problems.append(f"run.sweep_mode must be micro, macro, compare or stochastic, got {cfg.sweep_mode!r}")
    if cfg.mode == "sweep" and not cfg.sweep:
        problems.append("mode sweep needs a [sweep] table")
    if cfg.sweep and cfg.mode != "sweep":
        problems.append("[sweep] table given but run.mode is not sweep")
    if cfg.filter_width is not None and cfg.period > 0 and cfg.n_periods * cfg.period < cfg.filter_width * (1 - 1e-12):
        if cfg.mode in ("micro", "macro", "compare", "sweep"):
            problems.append("run length n_periods * period is shorter than the filter width")
    return problems


def parse_config(document: str, source: str = "<config>") -> SimulationConfig:
    """Parse and validate a TOML configuration document.

    Raises
    ------
    ConfigError
        Carrying every violation found; TOML syntax errors include line and column.
    """
    try:
        raw = tomllib.loads(document)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{source}: syntax error: {exc}"]) from exc

    problems: list[str] = []
    values: dict[str, Any] = {}
    for section, body in raw.items():
        if section == "sweep":
            continue
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        if not isinstance(body, dict):
            problems.append(f"[{section}] must be a table")
            continue
        for key, value in body.items():
            if key not in SCHEMA[section]:
                problems.append(f"unknown key {section}.{key}")
                continue
            name, typ = SCHEMA[section][key]
            v = _coerce(value, typ, f"{section}.{key}", problems)
            if v is None:
                continue
            if name == "probabilities":
                v = _probabilities(v, problems)
            values[name] = v

    sweep = {}
    if "sweep" in raw:
        body = raw["sweep"]
        if not isinstance(body, dict):
            problems.append("[sweep] must be a table")
        else:
            for key, grid in body.items():
                if key not in SWEEPABLE:
                    problems.append(f"unknown sweep parameter {key!r}")
                    continue
                if not isinstance(grid, list) or not grid:
                    problems.append(f"sweep.{key} must be a non-empty list")
                    continue
                _, typ = SWEEPABLE[key]
                coerced = [_coerce(v, typ, f"sweep.{key}", problems) for v in grid]
                sweep[key] = coerced

    for name in REQUIRED:
        if name not in values:
            section = next(s for s, keys in SCHEMA.items() for k, (f, _) in keys.items() if f == name)
            key = next(k for k, (f, _) in SCHEMA[section].items() if f == name)
            problems.append(f"missing required key {section}.{key}")
    if problems:
        raise ConfigError(problems)

    cfg = SimulationConfig(**values, sweep=sweep)
    problems = validate(cfg)
    for point in sweep_points(cfg):
        for p in validate(point):
            msg = f"sweep point {point_label(cfg, point)}: {p}"
            if msg not in problems:
                problems.append(msg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    return parse_config(text, str(path))


def _field_of(dotted: str) -> str:
    return SWEEPABLE[dotted][0]


def sweep_points(cfg: SimulationConfig) -> list[SimulationConfig]:
    """Cartesian grid of the ``[sweep]`` table in declaration order (last key fastest)."""
    if not cfg.sweep:
        return []
    import itertools

    keys = list(cfg.sweep)
    points = []
    for combo in itertools.product(*(cfg.sweep[k] for k in keys)):
        changes = {_field_of(k): v for k, v in zip(keys, combo)}
        point = cfg.replace(mode=cfg.sweep_mode, sweep={}, **changes)
        if "filter.width" not in cfg.sweep and "pump.period" in cfg.sweep and cfg.filter_width == 10 * cfg.period:
            point.filter_width = 10 * point.period
        points.append(point)
    return points


def point_label(cfg: SimulationConfig, point: SimulationConfig) -> str:
    return ",".join(f"{k}={getattr(point, _field_of(k))}" for k in cfg.sweep)
