"""Coarse-grained generator ``G = L + K L / (1 - exp(-L T))`` and its dynamics.

The pump part is built two independent ways:

* spectrally, lifting ``lam -> lam / (1 - exp(-lam T))`` through the
  eigen-decomposition of ``L`` with the value ``1/T`` on its kernel;
* as the geometric series ``-K sum_{l>=1} L exp(L T l)`` plus the kernel
  correction ``K P0 / T`` (every series term annihilates the kernel, while the
  scalar function tends to ``1/T`` there).
"""
from __future__ import annotations

import hashlib
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSteadyStateError, NearDefectiveError, SeriesNotConvergedError
from .fockspace import DensityOperator, FockSpace, Superoperator, unvec, vec
from .injection import PumpSchedule
from .liouvillian import (
    SpectralDecomposition,
    default_kernel_tol,
    exp_action,
    kernel_projector,
    lift_scalar_function,
    maser_kernel,
    propagator,
    spectral_decompose,
)
from .micro import CoarseGrainFilter, coarse_grain, evolve_micro

logger = logging.getLogger(__name__)

_DECOMPOSITIONS: OrderedDict = OrderedDict()
_CACHE_SIZE = 4


def decompose(L: Superoperator, precision: str = "auto") -> SpectralDecomposition:
    """Memoized :func:`spectral_decompose`; extended-precision runs are costly."""
    key = (hashlib.sha1(np.ascontiguousarray(L.matrix).tobytes()).hexdigest(), precision)
    if key in _DECOMPOSITIONS:
        _DECOMPOSITIONS.move_to_end(key)
        return _DECOMPOSITIONS[key]
    dec = spectral_decompose(L, precision)
    _DECOMPOSITIONS[key] = dec
    while len(_DECOMPOSITIONS) > _CACHE_SIZE:
        _DECOMPOSITIONS.popitem(last=False)
    return dec


@dataclass
class MacroGenerator:
    G: Superoperator
    pump_part: Superoperator
    method: str
    L: Superoperator
    diagnostics: dict = field(default_factory=dict)

    @property
    def space(self) -> FockSpace:
        return self.G.space


def _check_spectrum(dec: SpectralDecomposition, kernel_tol: float):
    worst = float(dec.eigenvalues.real.max()) if len(dec.eigenvalues) else 0.0
    if worst > kernel_tol:
        raise ValueError(f"generator has an eigenvalue with positive real part {worst:.3e}")


def pump_generator_spectral(
    K: Superoperator,
    L: Superoperator,
    T: float,
    kernel_tol: float | None = None,
    dec: SpectralDecomposition | None = None,
    diagnostics: dict | None = None,
) -> Superoperator:
    """``K f(L)`` with ``f(lam) = lam / (1 - exp(-lam T))`` and ``f = 1/T`` on the kernel."""
    dec = dec or decompose(L)
    tol = default_kernel_tol(dec.eigenvalues) if kernel_tol is None else kernel_tol
    _check_spectrum(dec, tol)
    F = lift_scalar_function(dec, maser_kernel(T), 1.0 / T, tol)
    if diagnostics is not None:
        diagnostics.update(
            kernel_dimension=int(dec.kernel_mask(tol).sum()),
            condition_estimate=dec.condition_estimate,
            decomposition_residual=dec.residual,
            escalated_blocks=dec.escalated_blocks,
            kernel_tol=tol,
        )
    return K @ F


def _nullspace_projector(L: Superoperator) -> tuple[np.ndarray, int]:
    """Kernel projector from left and right singular null vectors (one-dimensional kernel)."""
    u, s, vh = np.linalg.svd(L.matrix)
    r = vh[-1].conj()
    lft = u[:, -1].conj()
    return np.outer(r, lft) / (lft @ r), 1


def _tail_bound(eigs: np.ndarray, knorm: float, T: float, l_max: int) -> float:
    if knorm == 0 or len(eigs) == 0:
        return 0.0
    q = np.exp(eigs.real * T)
    return float(knorm * np.max(np.abs(eigs) * q ** (l_max + 1) / (1 - q)))


def _required_terms(eigs: np.ndarray, knorm: float, T: float, tail_tol: float) -> int:
    if knorm == 0 or len(eigs) == 0:
        return 1
    q = np.exp(eigs.real * T)
    need = np.log(tail_tol * (1 - q) / (knorm * np.abs(eigs))) / np.log(q) - 1
    l_req = max(1, int(math.ceil(float(np.max(need)))))
    while _tail_bound(eigs, knorm, T, l_req) > tail_tol:
        l_req += 1
    return l_req


def geometric_sum(E: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(sum_{l=1}^n E^l, E^n)`` by binary doubling."""
    if n == 0:
        return np.zeros_like(E), np.eye(E.shape[0], dtype=E.dtype)
    if n % 2 == 0:
        S, P = geometric_sum(E, n // 2)
        return S + P @ S, P @ P
    S, P = geometric_sum(E, n - 1)
    P = P @ E
    return S + P, P


def pump_generator_series(
    K: Superoperator,
    L: Superoperator,
    T: float,
    l_max: int | None = None,
    tail_tol: float = 1e-10,
    kernel_tol: float | None = None,
    dec: SpectralDecomposition | None = None,
    diagnostics: dict | None = None,
) -> Superoperator:
    """``-K sum_{l=1}^{l_max} L exp(L T l) + K P0 / T`` with a certified tail.

    ``l_max=None`` picks the smallest length whose tail estimate
    ``||K|| max |lam| q^(l_max+1) / (1 - q)``, ``q = exp(Re(lam) T)`` over the
    nonzero eigenvalues, is below ``tail_tol``.

    Raises
    ------
    SeriesNotConvergedError
        If an explicit ``l_max`` leaves a tail estimate above ``tail_tol``.
    """
    if l_max is not None and l_max < 1:
        raise ValueError("l_max must be >= 1")
    if dec is None:
        try:
            dec = decompose(L)
        except NearDefectiveError:
            dec = None
    if dec is not None:
        eigs = dec.eigenvalues
        tol = default_kernel_tol(eigs) if kernel_tol is None else kernel_tol
        P0 = kernel_projector(dec, tol)
        kdim = int(dec.kernel_mask(tol).sum())
    else:
        eigs = np.linalg.eigvals(L.matrix)
        tol = default_kernel_tol(eigs) if kernel_tol is None else kernel_tol
        P0, kdim = _nullspace_projector(L)
    nonzero = eigs[np.abs(eigs) > tol]
    knorm = float(np.linalg.norm(K.matrix, 2))
    if knorm > 0 and np.any(nonzero.real >= 0):
        raise SeriesNotConvergedError(l_max or 0, -1, np.inf)
    required = _required_terms(nonzero, knorm, T, tail_tol)
    if l_max is None:
        l_max = required
    bound = _tail_bound(nonzero, knorm, T, l_max)
    if bound > tail_tol:
        raise SeriesNotConvergedError(l_max, required, bound)
    E = propagator(L, T)
    S, _ = geometric_sum(E, l_max)
    pump = -K.matrix @ (L.matrix @ S) + K.matrix @ P0 / T
    if diagnostics is not None:
        diagnostics.update(series_length=int(l_max), tail_bound=bound, kernel_dimension=kdim, kernel_tol=tol)
    return Superoperator(pump, L.space)


def build_macro_generator(
    K: Superoperator,
    L: Superoperator,
    T: float,
    method: str = "spectral",
    l_max: int | None = None,
    tail_tol: float = 1e-10,
    kernel_tol: float | None = None,
    fallback: bool = True,
) -> MacroGenerator:
    """Assemble ``G = L + pump_part``.

    With ``fallback`` a near-defective ``L`` under ``method="spectral"``
    switches to the series route; the switch is recorded in the diagnostics.
    """
    diag: dict = {}
    if method == "spectral":
        try:
            pump = pump_generator_spectral(K, L, T, kernel_tol, diagnostics=diag)
        except NearDefectiveError as exc:
            if not fallback:
                raise
            logger.warning("%s; falling back to the series route", exc)
            diag["fallback"] = str(exc)
            method = "series"
            pump = pump_generator_series(K, L, T, l_max, tail_tol, kernel_tol, diagnostics=diag)
    elif method == "series":
        pump = pump_generator_series(K, L, T, l_max, tail_tol, kernel_tol, diagnostics=diag)
    else:
        raise ValueError(f"unknown method {method!r}")
    G = L + pump
    trace_row = vec(np.eye(L.space.dim)).conj()
    diag["trace_annihilation"] = float(np.abs(trace_row @ G.matrix).max())
    return MacroGenerator(G, pump, method, L, diag)


def evolve_macro(G: MacroGenerator | Superoperator, rho_bar0, t: float) -> np.ndarray:
    """``exp(G t) rho_bar0``."""
    S = G.G if isinstance(G, MacroGenerator) else G
    return exp_action(S, t, rho_bar0)


def evolve_macro_grid(G: MacroGenerator | Superoperator, rho_bar0, step: float, n_steps: int) -> np.ndarray:
    """States ``exp(G m step) rho_bar0`` for ``m = 0..n_steps`` via powers of one propagator."""
    S = G.G if isinstance(G, MacroGenerator) else G
    rho_bar0 = np.asarray(rho_bar0, dtype=complex)
    d = rho_bar0.shape[0]
    P = propagator(S, step)
    out = np.empty((n_steps + 1, d * d), dtype=complex)
    x = vec(rho_bar0)
    out[0] = x
    for m in range(1, n_steps + 1):
        x = P @ x
        out[m] = x
    return out.reshape(-1, d, d).transpose(0, 2, 1).copy()


def steady_state(G: MacroGenerator | Superoperator, kernel_rtol: float = 1e-8) -> DensityOperator:
    """Trace-normalized null vector of ``G``.

    The kernel dimension is the number of singular values below
    ``kernel_rtol * s_max``; anything but one raises
    :class:`DegenerateSteadyStateError`.
    """
    S = G.G if isinstance(G, MacroGenerator) else G
    M = S.matrix
    _, s, vh = np.linalg.svd(M)
    kdim = int(np.sum(s <= kernel_rtol * s[0])) if s[0] > 0 else len(s)
    if kdim != 1:
        gap = s[-2] / s[0] if len(s) > 1 and s[0] > 0 else 0.0
        raise DegenerateSteadyStateError(kdim, gap)
    x = vh[-1].conj()
    rho = unvec(x, S.space.dim)
    rho = rho / np.trace(rho)
    herm = float(np.abs(rho - rho.conj().T).max())
    rho = 0.5 * (rho + rho.conj().T)
    residual = float(np.linalg.norm(M @ vec(rho)))
    return DensityOperator(
        rho, S.space, diagnostics={"residual": residual, "norm": float(s[0]), "hermiticity": herm}
    )


def macro_initial_state(
    rho0,
    L: Superoperator,
    K: Superoperator,
    schedule: PumpSchedule,
    filt: CoarseGrainFilter,
    samples_per_period: int = 8,
) -> np.ndarray:
    """Coarse-grained state at ``t = T0`` from a microscopic run over ``[0, T0]``."""
    if filt.width < schedule.period * (1 - 1e-12):
        raise ValueError("filter width below injection period")
    n_periods = math.ceil(filt.width / schedule.period - 1e-9)
    traj = evolve_micro(rho0, L, K, schedule, n_periods, samples_per_period)
    cg = coarse_grain(traj, filt)
    return cg.states[0]
