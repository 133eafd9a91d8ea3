"""Shipped scenarios: run configs bundled with the package plus the named checks."""
from __future__ import annotations

from importlib import resources

from .acceptance import CRITERIA


def config_scenarios() -> list[str]:
    root = resources.files("maserlab") / "scenarios"
    return sorted(p.name[: -len(".toml")] for p in root.iterdir() if p.name.endswith(".toml"))


def check_scenarios() -> list[str]:
    return [f"criterion-{n}" for n in sorted(CRITERIA)]


def scenario_names() -> list[str]:
    return config_scenarios() + check_scenarios()


def describe(name: str) -> str:
    if name.startswith("criterion-"):
        fn = CRITERIA[int(name.split("-", 1)[1])]
        return (fn.__doc__ or "").strip().splitlines()[0]
    text = (resources.files("maserlab") / "scenarios" / f"{name}.toml").read_text()
    first = text.splitlines()[0] if text else ""
    return first.lstrip("# ").strip()
