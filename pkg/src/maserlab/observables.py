"""Photon statistics and state comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fockspace import FockSpace
from .micro import CoarseGrainFilter, Trajectory, coarse_grain

#: top-level population above which a run is flagged truncation-limited
TRUNCATION_GATE = 1e-6


@dataclass(frozen=True)
class PhotonStatistics:
    mean_n: float
    variance: float
    mandel_q: float | None
    distribution: np.ndarray
    top_level_population: float
    purity: float

    @property
    def truncation_limited(self) -> bool:
        return self.top_level_population > TRUNCATION_GATE


def photon_statistics(rho, space: FockSpace | None = None) -> PhotonStatistics:
    """Number-operator moments of a (possibly unnormalized) state.

    Moments are raw sums over the diagonal, so ``mean_n`` is linear in ``rho``.
    Mandel Q is ``None`` when ``mean_n <= 1e-12``.
    """
    rho = np.asarray(rho)
    if space is not None:
        space.check_operator(rho)
    p = np.real(np.diagonal(rho)).copy()
    n = np.arange(p.shape[0], dtype=float)
    mean = float(n @ p)
    second = float((n * n) @ p)
    var = max(second - mean * mean, 0.0)
    q = var / mean - 1.0 if mean > 1e-12 else None
    purity = float(np.real(np.vdot(rho.conj().T, rho)))  # Tr(rho^2)
    return PhotonStatistics(mean, var, q, p, float(p[-1]), purity)


def trace_distance(rho, sigma) -> float:
    rho = np.asarray(rho)
    sigma = np.asarray(sigma)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    diff = rho - sigma
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def limit_cycle_average(cycle: Trajectory, filt: CoarseGrainFilter) -> np.ndarray:
    """Filter average of a periodic trajectory given over exactly one period.

    The cycle is repeated until it covers the filter width and the
    coarse-grained state at the final sample is returned.
    """
    s = cycle.samples_per_period
    if len(cycle) != s:
        raise ValueError("cycle must cover exactly one period")
    reps = max(1, math.ceil(filt.width / cycle.schedule.period - 1e-9))
    states = np.concatenate([cycle.states] * reps)
    kicked = None if cycle.kicked is None else np.concatenate([cycle.kicked[:1]] * reps)
    h = cycle.step
    tiled = Trajectory(h * np.arange(1, len(states) + 1), states, cycle.schedule, s, kicked)
    if kicked is None:
        # periodicity supplies the value at t = 0 from the end of the cycle
        tiled = Trajectory(
            h * np.arange(1, len(states) + s + 1),
            np.concatenate([states, cycle.states]),
            cycle.schedule,
            s,
        )
    return coarse_grain(tiled, filt).states[-1]
