"""Atom-injection events: Jaynes-Cummings kicks, k-atom events and their average.

A kick superoperator ``M`` is the *change* of the field caused by an event,
so the post-event state is ``(1 + M) rho``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .fockspace import FockSpace, Superoperator, sandwich


@dataclass(frozen=True)
class KickModel:
    """Resonant passage of one excited two-level atom with Rabi angle ``theta = g tau``."""

    theta: float
    space: FockSpace

    def __post_init__(self):
        if not self.theta >= 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")


@dataclass(frozen=True)
class PumpSchedule:
    period: float

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"injection period must be > 0, got {self.period}")


@dataclass(frozen=True)
class InjectionStatistics:
    """Probabilities ``p_k`` of a ``k``-atom event per tick (``k = 0`` is an empty tick)."""

    probabilities: Mapping[int, float]

    def __post_init__(self):
        probs = {}
        for k, p in dict(self.probabilities).items():
            if int(k) != k or int(k) < 0:
                raise ValueError(f"atom count must be a non-negative integer, got {k!r}")
            if not 0 <= p <= 1:
                raise ValueError(f"p_{k} = {p} outside [0, 1]")
            probs[int(k)] = float(p)
        total = sum(probs.values())
        if abs(total - 1) > 1e-12:
            raise ValueError(f"injection probabilities sum to {total:.12g}")
        object.__setattr__(self, "probabilities", dict(sorted(probs.items())))

    @property
    def k_max(self) -> int:
        return max(self.probabilities)

    @property
    def mean_atoms(self) -> float:
        return sum(k * p for k, p in self.probabilities.items())

    def support(self) -> list[int]:
        return [k for k, p in self.probabilities.items() if p > 0]


def jc_kraus(model: KickModel) -> tuple[np.ndarray, np.ndarray]:
    """Kraus pair ``(C, S)`` of the excited-atom gain channel ``C rho C + S rho S^+``.

    ``C|n> = cos(theta sqrt(n+1)) |n>`` (atom leaves excited) and
    ``S|n> = sin(theta sqrt(n+1)) |n+1>`` (atom leaves in the ground state).
    The emission from ``|n_max>`` would leave the space and is dropped; see
    :func:`clipped_flux`.
    """
    d = model.space.dim
    phase = model.theta * np.sqrt(np.arange(1, d + 1))
    C = np.diag(np.cos(phase)).astype(complex)
    S = np.zeros((d, d), dtype=complex)
    S[np.arange(1, d), np.arange(d - 1)] = np.sin(phase[:-1])
    return C, S


def single_atom_kick(model: KickModel) -> Superoperator:
    """``M_1 = Phi - 1`` for the Jaynes-Cummings gain channel ``Phi``."""
    C, S = jc_kraus(model)
    space = model.space
    phi = sandwich(C, C.conj().T, space) + sandwich(S, S.conj().T, space)
    return phi - Superoperator.identity(space)


def clipped_flux(model: KickModel, rho) -> float:
    """Trace lost in one passage because emission out of ``|n_max>`` is truncated."""
    n = model.space.n_max
    return float(np.sin(model.theta * np.sqrt(n + 1)) ** 2 * np.real(np.asarray(rho)[n, n]))


def multi_atom_kick(M1: Superoperator, k: int) -> Superoperator:
    """``M_k = (1 + M_1)^k - 1`` for ``k`` sequential passages within one tick."""
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    one = Superoperator.identity(M1.space)
    step = one + M1
    channel = Superoperator(np.linalg.matrix_power(step.matrix, int(k)), M1.space)
    return channel - one


def kick_family(M1: Superoperator, k_max: int) -> dict[int, Superoperator]:
    """Sequential-passage family ``{k: M_k}`` for ``1 <= k <= k_max``."""
    one = Superoperator.identity(M1.space)
    family, channel = {}, one
    for k in range(1, k_max + 1):
        channel = (one + M1) @ channel
        family[k] = channel - one
    return family


def average_kick(
    stats: InjectionStatistics,
    family: Mapping[int, Superoperator] | Callable[[int], Superoperator],
    space: FockSpace | None = None,
) -> Superoperator:
    """``K = sum_{k>=1} p_k M_k``; empty ticks contribute nothing."""
    lookup = family if callable(family) else family.get
    K = None
    for k, p in stats.probabilities.items():
        if k == 0 or p == 0:
            continue
        Mk = lookup(k)
        if Mk is None:
            raise KeyError(f"no kick superoperator for k={k} although p_{k} = {p}")
        K = p * Mk if K is None else K + p * Mk
    if K is None:
        if space is None:
            members = list(family.values()) if not callable(family) else []
            if not members:
                raise ValueError("space is required when no event carries atoms")
            space = members[0].space
        return Superoperator.zero(space)
    return K


def sample_event(stats: InjectionStatistics, rng: np.random.Generator) -> int:
    """Draw an atom count ``k`` with probability ``p_k``; advances ``rng``."""
    ks = list(stats.probabilities)
    ps = np.fromiter(stats.probabilities.values(), float)
    cdf = np.cumsum(ps)
    u = rng.random()
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return ks[min(i, len(ks) - 1)]
