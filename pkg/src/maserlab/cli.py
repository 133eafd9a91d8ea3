"""Command line entry point.

Exit codes: 0 success, 2 config error, 3 numerical-method error,
4 diagnostic-gate failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config, validate
from .errors import ConfigError, GateFailure, MaserLabError

logger = logging.getLogger("maserlab")


def _error_record(exc: BaseException, code: int) -> None:
    record = {"status": "error", "exit_code": code, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        record["violations"] = exc.violations
    print(json.dumps(record), file=sys.stderr)


def _outputs(csv_path: Path):
    return csv_path.with_suffix(".json"), csv_path.with_suffix(".png")


def execute(cfg, out: Path, figure: bool = True) -> int:
    """Run one config, write CSV, JSON sidecar and figure; return the exit status."""
    from .runner import emit_csv, emit_json, run

    report = run(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_csv(report, out)
    json_path, png_path = _outputs(out)
    if cfg.json:
        emit_json(report, json_path)
    if figure and cfg.figure:
        from .plotting import render_report

        render_report(report, png_path, title=f"{cfg.mode} run")
    for name, g in report.gates.items():
        state = "pass" if g["passed"] else ("FAIL" if g.get("enforced", True) else "fail (not enforced)")
        print(f"gate {name}: {state} (value {g['value']:.3e}, limit {g['limit']:.3e})")
    for k, v in report.summary.items():
        print(f"{k}: {v}")
    print(f"wrote {out}")
    if not report.passed:
        raise GateFailure("diagnostic gates failed: " + ", ".join(report.failed_gates()))
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    changes = {}
    if args.mode:
        changes["mode"] = args.mode
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.seed is not None:
        changes["seed"] = args.seed
    if changes:
        cfg = cfg.replace(**changes)
        problems = validate(cfg)
        if problems:
            raise ConfigError(problems)
    out = Path(args.out or cfg.output_path or Path(args.config).with_suffix(".csv").name)
    return execute(cfg, out, figure=not args.no_figure)


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: valid ({cfg.mode} mode)")
    return 0


def cmd_scenarios(args) -> int:
    from . import acceptance, scenarios

    if args.action == "list":
        for name in scenarios.scenario_names():
            print(f"{name:<18} {scenarios.describe(name)}")
        return 0
    name = args.name
    if name not in scenarios.scenario_names():
        raise ConfigError([f"unknown scenario {name!r}; see 'scenarios list'"])
    if name.startswith("criterion-"):
        result = acceptance.CRITERIA[int(name.split("-", 1)[1])]()
        print(result.line())
        if not result.passed:
            raise GateFailure(f"scenario {name} failed")
        return 0
    cfg = load_config(acceptance.scenario_path(name))
    out_dir = Path(args.out_dir)
    return execute(cfg, out_dir / f"{name}.csv", figure=not args.no_figure)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maserlab", description="Periodically pumped micromaser simulations.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a config document")
    r.add_argument("config")
    r.add_argument("--mode", choices=("micro", "macro", "compare", "stochastic", "sweep"))
    r.add_argument("--out", help="CSV path (JSON and PNG are written alongside)")
    r.add_argument("--workers", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--no-figure", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config document")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("scenarios", help="shipped scenarios")
    s.add_argument("action", choices=("list", "run"))
    s.add_argument("name", nargs="?")
    s.add_argument("--out-dir", default="scenario-output")
    s.add_argument("--no-figure", action="store_true")
    s.set_defaults(func=cmd_scenarios)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "scenarios" and args.action == "run" and not args.name:
        parser.error("scenarios run needs a scenario name")
    try:
        return args.func(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        _error_record(exc, exc.exit_code)
        return exc.exit_code
    except MaserLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _error_record(exc, exc.exit_code)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _error_record(exc, 1)
        return 1


if __name__ == "__main__":
    sys.exit(main())
