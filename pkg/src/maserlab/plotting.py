"""Static figures written next to the CSV output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .runner import RunReport  # noqa: E402


def _series(report: RunReport):
    """``(label, rows)`` per (point, mode) in first-appearance order."""
    groups: dict[tuple, list] = {}
    for r in report.rows:
        groups.setdefault((r.get("point"), r["mode"]), []).append(r)
    for (point, mode), rows in groups.items():
        yield (mode if point is None else f"{mode} [{point}]"), rows


def render_report(report: RunReport, path, title: str | None = None) -> Path:
    """Mean photon number and Mandel Q against time, one line per mode (and sweep point)."""
    path = Path(path)
    fig, (ax_n, ax_q) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    for label, rows in _series(report):
        t = np.array([r["time"] for r in rows])
        n = np.array([r["mean_n"] for r in rows])
        q = np.array([np.nan if r["mandel_q"] is None else r["mandel_q"] for r in rows])
        style = "--" if label.startswith("macro") else "-"
        lw = 0.6 if label.startswith("micro ") or label == "micro" else 1.2
        ax_n.plot(t, n, style, lw=lw, label=label)
        ax_q.plot(t, q, style, lw=lw, label=label)
    ax_n.set_ylabel(r"$\langle n\rangle$")
    ax_q.set_ylabel("Mandel Q")
    ax_q.axhline(0.0, color="0.6", lw=0.5)
    ax_q.set_xlabel("time")
    if report.rows:
        ax_n.legend(fontsize="small")
    if title:
        ax_n.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
