"""Run orchestration: build the model from a config, evolve, tabulate, gate."""
from __future__ import annotations

import concurrent.futures
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SimulationConfig, point_label, sweep_points
from .fockspace import FockSpace, Superoperator, fock_state, thermal_state
from .injection import (
    InjectionStatistics,
    KickModel,
    PumpSchedule,
    average_kick,
    clipped_flux,
    kick_family,
    single_atom_kick,
)
from .liouvillian import CavityParams, build_cavity_liouvillian
from .macro import build_macro_generator, evolve_macro_grid, macro_initial_state
from .micro import CoarseGrainFilter, coarse_grain, evolve_micro, evolve_micro_ensemble
from .observables import TRUNCATION_GATE, photon_statistics, trace_distance

BASE_COLUMNS = ("time", "mode", "mean_n", "variance", "mandel_q", "purity", "top_level_population")
#: stochastic runs must match the deterministic run within this many standard errors
STOCHASTIC_SIGMAS = 3.0


@dataclass
class RunReport:
    rows: list[dict]
    diagnostics: dict
    timing: dict
    config: dict
    columns: list[str]
    gates: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(g["passed"] for g in self.gates.values() if g.get("enforced", True))

    def failed_gates(self) -> list[str]:
        return [k for k, g in self.gates.items() if g.get("enforced", True) and not g["passed"]]

    def column(self, name: str, mode: str | None = None) -> np.ndarray:
        return np.array(
            [np.nan if r.get(name) is None else r[name] for r in self.rows if mode is None or r["mode"] == mode],
            dtype=float,
        )

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "columns": self.columns,
            "n_rows": len(self.rows),
            "summary": self.summary,
            "gates": self.gates,
            "diagnostics": self.diagnostics,
            "timing": self.timing,
        }


@dataclass
class Model:
    space: FockSpace
    L: Superoperator
    K: Superoperator
    family: dict
    stats: InjectionStatistics
    kick: KickModel
    schedule: PumpSchedule
    filt: CoarseGrainFilter
    rho0: np.ndarray


def initial_state(cfg: SimulationConfig, space: FockSpace) -> np.ndarray:
    if cfg.initial == "vacuum":
        return fock_state(space, 0)
    if cfg.initial == "thermal":
        return thermal_state(space, cfg.n_th)
    return fock_state(space, int(cfg.initial.split(":")[1]))


def build_model(cfg: SimulationConfig) -> Model:
    space = FockSpace(cfg.n_max)
    L = build_cavity_liouvillian(space, CavityParams(cfg.kappa, cfg.n_th))
    stats = InjectionStatistics(cfg.probabilities)
    kick = KickModel(cfg.theta, space)
    family = kick_family(single_atom_kick(kick), max(stats.k_max, 1))
    K = average_kick(stats, family, space)
    return Model(
        space,
        L,
        K,
        family,
        stats,
        kick,
        PumpSchedule(cfg.period),
        CoarseGrainFilter(cfg.filter_kind, cfg.filter_width),
        initial_state(cfg, space),
    )


def _row(t: float, mode: str, rho) -> dict:
    st = photon_statistics(rho)
    return {
        "time": float(t),
        "mode": mode,
        "mean_n": st.mean_n,
        "variance": st.variance,
        "mandel_q": st.mandel_q,
        "purity": st.purity,
        "top_level_population": st.top_level_population,
    }


def _rows(times, states, mode: str) -> list[dict]:
    return [_row(t, mode, rho) for t, rho in zip(times, states)]


def _truncation_gate(rows: list[dict]) -> dict:
    top = max((r["top_level_population"] for r in rows), default=0.0)
    return {"value": top, "limit": TRUNCATION_GATE, "passed": bool(top <= TRUNCATION_GATE)}


def _flux(model: Model, pre_kick) -> float:
    return max((clipped_flux(model.kick, rho) for rho in pre_kick), default=0.0)


def _pre_kick_states(model: Model, traj) -> list:
    s = traj.samples_per_period
    return [model.rho0] + list(traj.states[s - 1 : -1 : s])


def _min_eigenvalue(states) -> float:
    herm = 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))
    return float(np.linalg.eigvalsh(herm).min())


def _micro(cfg: SimulationConfig, model: Model, diag: dict):
    traj = evolve_micro(model.rho0, model.L, model.K, model.schedule, cfg.n_periods, cfg.samples_per_period)
    diag["truncation_flux"] = _flux(model, _pre_kick_states(model, traj))
    return traj


def _macro_trace(cfg: SimulationConfig, model: Model, diag: dict):
    """Macro states on the micro sample grid for ``t >= T0``."""
    gen = build_macro_generator(
        model.K,
        model.L,
        cfg.period,
        method=cfg.method,
        l_max=cfg.l_max,
        tail_tol=cfg.tail_tol,
        kernel_tol=cfg.kernel_tol,
    )
    diag["generator"] = _jsonable(gen.diagnostics)
    diag["generator"]["method"] = gen.method
    h = cfg.period / cfg.samples_per_period
    W = model.filt.grid_points(h)
    N = cfg.n_periods * cfg.samples_per_period
    if cfg.identify_initial:
        # shortcut: macro state at t = 0 taken to be the micro one
        states = evolve_macro_grid(gen, model.rho0, h, N)[W:]
        diag["seed"] = "identified with the microscopic initial state"
    else:
        seed = macro_initial_state(
            model.rho0, model.L, model.K, model.schedule, model.filt, cfg.samples_per_period
        )
        states = evolve_macro_grid(gen, seed, h, N - W)
        diag["seed"] = "macro_initial_state"
    diag["macro_min_eigenvalue"] = _min_eigenvalue(states)
    diag["macro_max_trace_error"] = float(np.abs(np.trace(states, axis1=1, axis2=2) - 1).max())
    return h * np.arange(W, N + 1), states, gen


def run_micro(cfg: SimulationConfig, model: Model) -> RunReport:
    diag: dict = {}
    traj = _micro(cfg, model, diag)
    cg = coarse_grain(traj, model.filt)
    rows = _rows(traj.times, traj.states, "micro") + _rows(cg.times, cg.states, "micro-coarse")
    gates = {"truncation": _truncation_gate(rows)}
    return RunReport(rows, diag, {}, {}, list(BASE_COLUMNS), gates)


def run_macro(cfg: SimulationConfig, model: Model) -> RunReport:
    diag: dict = {}
    times, states, _ = _macro_trace(cfg, model, diag)
    rows = _rows(times, states, "macro")
    gates = {"truncation": _truncation_gate(rows)}
    return RunReport(rows, diag, {}, {}, list(BASE_COLUMNS), gates)


def run_compare(cfg: SimulationConfig, model: Model) -> RunReport:
    diag: dict = {}
    traj = _micro(cfg, model, diag)
    cg = coarse_grain(traj, model.filt)
    times, states, _ = _macro_trace(cfg, model, diag)
    if len(times) != len(cg.times) or not np.allclose(times, cg.times, rtol=0, atol=1e-9 * times[-1]):
        raise RuntimeError("micro and macro time grids differ")
    micro_rows = _rows(cg.times, cg.states, "micro-coarse")
    macro_rows = _rows(times, states, "macro")
    devs = []
    for a, b in zip(micro_rows, macro_rows):
        dev = abs(b["mean_n"] - a["mean_n"]) / max(1.0, a["mean_n"])
        a["dev_mean_n"] = b["dev_mean_n"] = dev
        devs.append(dev)
    td = np.array([trace_distance(a, b) for a, b in zip(cg.states, states)])
    devs = np.array(devs)
    i = int(np.argmax(devs))
    summary = {
        "max_dev_mean_n": float(devs[i]),
        "max_dev_time": float(times[i]),
        "max_trace_distance": float(td.max()),
        "max_trace_distance_time": float(times[int(np.argmax(td))]),
        "final_dev_mean_n": float(devs[-1]),
    }
    rows = micro_rows + macro_rows
    gates = {"truncation": _truncation_gate(rows)}
    if cfg.compare_tolerance is not None:
        gates["compare"] = {
            "value": summary["max_dev_mean_n"],
            "limit": cfg.compare_tolerance,
            "passed": bool(summary["max_dev_mean_n"] <= cfg.compare_tolerance),
        }
    return RunReport(rows, diag, {}, {}, list(BASE_COLUMNS) + ["dev_mean_n"], gates, summary)


def realization_seeds(seed: int, n: int) -> list[int]:
    """Independent per-realization seeds derived from one master seed."""
    return [int(x) for x in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


def run_stochastic(cfg: SimulationConfig, model: Model) -> RunReport:
    """Ensemble of sampled-event runs next to the deterministic ``K``-averaged run."""
    diag: dict = {}
    seeds = realization_seeds(cfg.seed, cfg.realizations)
    ens = evolve_micro_ensemble(
        model.rho0,
        model.L,
        model.family,
        model.stats,
        model.schedule,
        cfg.n_periods,
        seeds,
        cfg.samples_per_period,
    )
    traj = _micro(cfg, model, diag)
    mean, se = ens.photon_number()
    det = np.array([photon_statistics(r).mean_n for r in traj.states])
    excess = np.abs(mean - det)
    rows = _rows(ens.times, ens.mean_states, "stochastic") + _rows(traj.times, traj.states, "micro")
    diag["event_counts"] = {int(k): int((ens.events == k).sum()) for k in model.stats.support()}
    summary = {
        "realizations": cfg.realizations,
        "max_abs_dev_mean_n": float(excess.max()),
        "max_standard_error": float(se.max()),
    }
    gates = {"truncation": _truncation_gate(rows)}
    if cfg.realizations > 1:
        ratio = excess / np.maximum(se, 1e-300)
        summary["max_sigma"] = float(ratio.max())
        ok = bool(np.all(excess <= STOCHASTIC_SIGMAS * se + 1e-12))
        gates["stochastic"] = {"value": summary["max_sigma"], "limit": STOCHASTIC_SIGMAS, "passed": ok}
    return RunReport(rows, diag, {}, {}, list(BASE_COLUMNS), gates, summary)


_RUNNERS = {"micro": run_micro, "macro": run_macro, "compare": run_compare, "stochastic": run_stochastic}


def _run_single(cfg: SimulationConfig) -> RunReport:
    t0 = time.perf_counter()
    model = build_model(cfg)
    report = _RUNNERS[cfg.mode](cfg, model)
    if not cfg.gates:
        for g in report.gates.values():
            g["enforced"] = False
    report.config = cfg.to_dict()
    report.timing = {"wall_seconds": time.perf_counter() - t0}
    return report


def run_sweep(cfg: SimulationConfig, workers: int | None = None) -> RunReport:
    t0 = time.perf_counter()
    points = sweep_points(cfg)
    workers = workers or cfg.workers
    if workers > 1 and len(points) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_single, points))
    else:
        reports = [_run_single(p) for p in points]
    rows, gates, diag, summary = [], {}, {}, {}
    columns = list(reports[0].columns) if reports else list(BASE_COLUMNS)
    for point, rep in zip(points, reports):
        label = point_label(cfg, point)
        for r in rep.rows:
            r["point"] = label
            rows.append(r)
        for name, g in rep.gates.items():
            gates[f"{label}:{name}"] = g
        diag[label] = rep.diagnostics
        if rep.summary:
            summary[label] = rep.summary
    report = RunReport(rows, diag, {}, cfg.to_dict(), columns + ["point"], gates, summary)
    report.timing = {
        "wall_seconds": time.perf_counter() - t0,
        "points": {point_label(cfg, p): r.timing["wall_seconds"] for p, r in zip(points, reports)},
    }
    return report


def run(config: SimulationConfig) -> RunReport:
    """Execute a validated config.

    Module errors propagate; gate outcomes are recorded in ``report.gates``
    and checked by the caller.
    """
    if config.mode == "sweep":
        return run_sweep(config)
    return _run_single(config)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return "%.12g" % v


def emit_csv(report: RunReport, path) -> None:
    """Write the rows as CSV; identical reports give identical bytes."""
    lines = [",".join(report.columns)]
    for r in report.rows:
        lines.append(",".join(_fmt(r.get(c)) for c in report.columns))
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def emit_json(report: RunReport, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n")
