"""Microscopic kick-and-decay dynamics and coarse graining.

Time grid conventions
---------------------
A trajectory over ``n_periods`` with ``s`` samples per period holds the states
at ``t = (m + 1) h`` for ``m = 0 .. n_periods*s - 1`` with ``h = T/s``.  The
sample at ``t = (j+1) T`` is the *pre-kick* state (left limit) at that tick.
Because the field jumps at every tick, the post-kick states ``(1 + K) rho_j``
at ``t = jT`` are stored separately in ``Trajectory.kicked``; the
coarse-graining quadrature uses them as the right limits at the kick times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import erf

from .fockspace import FockSpace, Superoperator, number, unvec, vec
from .injection import InjectionStatistics, PumpSchedule, sample_event
from .liouvillian import propagator

FILTER_KINDS = ("rectangular", "triangular", "gaussian-truncated", "custom")
#: discrete filter integral must be within this of one before renormalization
NORMALIZATION_TOL = 1e-3


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_samples, d, d)
    schedule: PumpSchedule
    samples_per_period: int
    kicked: np.ndarray | None = None  # (n_periods, d, d), right limits at t = jT
    diagnostics: dict = field(default_factory=dict)

    @property
    def step(self) -> float:
        return self.schedule.period / self.samples_per_period

    @property
    def n_periods(self) -> int:
        return len(self.times) // self.samples_per_period

    def __len__(self):
        return len(self.times)


def uniform_times(schedule: PumpSchedule, n_periods: int, samples_per_period: int) -> np.ndarray:
    h = schedule.period / samples_per_period
    return h * np.arange(1, n_periods * samples_per_period + 1)


@dataclass(frozen=True)
class CoarseGrainFilter:
    """Causal averaging window ``f(tau)`` supported on ``[0, width]``.

    ``kind="gaussian-truncated"`` is centred at ``width/2`` with standard
    deviation ``width/6``.  ``kind="custom"`` takes ``profile`` as given, which
    is how deliberately mis-normalized windows are expressed.
    """

    kind: str = "rectangular"
    width: float = 1.0
    profile: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if not self.width > 0:
            raise ValueError(f"filter width must be > 0, got {self.width}")
        if self.kind == "custom" and self.profile is None:
            raise ValueError("custom filter needs a profile")

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        w = self.width
        inside = (tau >= 0) & (tau <= w * (1 + 1e-12))
        if self.kind == "rectangular":
            f = np.full_like(tau, 1.0 / w)
        elif self.kind == "triangular":
            f = (2.0 / w) * (1.0 - np.abs(2.0 * tau / w - 1.0))
        elif self.kind == "gaussian-truncated":
            sigma = w / 6.0
            norm = sigma * math.sqrt(2 * math.pi) * erf(3.0 / math.sqrt(2))
            f = np.exp(-0.5 * ((tau - w / 2) / sigma) ** 2) / norm
        else:
            f = np.asarray(self.profile(tau), dtype=float)
        return np.where(inside, f, 0.0)

    def weights(self, h: float) -> np.ndarray:
        """Trapezoid weights on the grid ``tau = i h``, ``i = 0..W``, summing to one."""
        W = self.grid_points(h)
        f = self(h * np.arange(W + 1))
        w = h * f
        w[0] *= 0.5
        w[-1] *= 0.5
        total = w.sum()
        if abs(total - 1) > NORMALIZATION_TOL:
            raise ValueError(f"filter integrates to {total:.6g} on the trajectory grid, not 1")
        return w / total

    def grid_points(self, h: float) -> int:
        W = self.width / h
        if abs(W - round(W)) > 1e-9 * max(1.0, W) or round(W) < 1:
            raise ValueError(f"filter width {self.width} is not a multiple of the sample step {h}")
        return int(round(W))


def stroboscopic_step(rho, L: Superoperator, K: Superoperator, T: float) -> np.ndarray:
    """One period: kick at the period start, then free decay for ``T``."""
    rho = np.asarray(rho, dtype=complex)
    x = vec(rho) + K.matrix @ vec(rho)
    return unvec(propagator(L, T) @ x, rho.shape[0])


def _decay_steps(L: Superoperator, T: float, samples_per_period: int) -> np.ndarray:
    return propagator(L, T / samples_per_period)


def evolve_micro(
    rho0,
    L: Superoperator,
    K: Superoperator,
    schedule: PumpSchedule,
    n_periods: int,
    samples_per_period: int = 8,
) -> Trajectory:
    """Sample ``exp(L t') (1 + K) rho_j`` for ``t'`` in ``(0, T]`` over each period."""
    if n_periods < 1 or samples_per_period < 1:
        raise ValueError("n_periods and samples_per_period must be >= 1")
    d = L.space.dim
    Eh = _decay_steps(L, schedule.period, samples_per_period)
    kick = np.eye(d * d, dtype=complex) + K.matrix
    s = samples_per_period
    out = np.empty((n_periods * s, d * d), dtype=complex)
    kicked = np.empty((n_periods, d * d), dtype=complex)
    x = vec(np.asarray(rho0, dtype=complex))
    for j in range(n_periods):
        x = kick @ x
        kicked[j] = x
        for i in range(s):
            x = Eh @ x
            out[j * s + i] = x
    return Trajectory(
        uniform_times(schedule, n_periods, s),
        _to_states(out, d),
        schedule,
        s,
        _to_states(kicked, d),
    )


def _to_states(rows: np.ndarray, d: int) -> np.ndarray:
    # row-wise unvec: vec index i + d*j -> state[i, j]
    return rows.reshape(-1, d, d).transpose(0, 2, 1).copy()


def _channels(family: Mapping[int, Superoperator], stats: InjectionStatistics, d: int) -> dict:
    one = np.eye(d * d, dtype=complex)
    chans = {}
    for k in stats.support():
        if k == 0:
            chans[k] = None
        elif k not in family:
            raise KeyError(f"no kick superoperator for k={k}")
        else:
            chans[k] = one + family[k].matrix
    return chans


def evolve_micro_stochastic(
    rho0,
    L: Superoperator,
    family: Mapping[int, Superoperator],
    stats: InjectionStatistics,
    schedule: PumpSchedule,
    n_periods: int,
    seed: int,
    samples_per_period: int = 8,
) -> Trajectory:
    """Single realization: each tick draws ``k`` and applies ``1 + M_k``."""
    ens = evolve_micro_ensemble(
        rho0, L, family, stats, schedule, n_periods, [seed], samples_per_period, keep_states=True
    )
    return ens.realization(0)


@dataclass
class Ensemble:
    """Batch of stochastic realizations sharing one time grid.

    ``photon_numbers`` holds ``<n>`` per realization and sample; full states are
    kept only when requested, the ensemble-mean state always.
    """

    times: np.ndarray
    mean_states: np.ndarray  # (n_samples, d, d)
    mean_kicked: np.ndarray  # (n_periods, d, d)
    photon_numbers: np.ndarray  # (n_realizations, n_samples)
    events: np.ndarray  # (n_realizations, n_periods)
    schedule: PumpSchedule
    samples_per_period: int
    states: np.ndarray | None = None  # (n_realizations, n_samples, d, d)
    kicked: np.ndarray | None = None

    def realization(self, r: int) -> Trajectory:
        if self.states is None:
            raise ValueError("ensemble was run without keep_states")
        return Trajectory(
            self.times,
            self.states[r],
            self.schedule,
            self.samples_per_period,
            self.kicked[r],
            {"events": self.events[r].tolist()},
        )

    def mean(self) -> Trajectory:
        return Trajectory(self.times, self.mean_states, self.schedule, self.samples_per_period, self.mean_kicked)

    def photon_number(self) -> tuple[np.ndarray, np.ndarray]:
        """Ensemble mean of ``<n>`` at every sample and its standard error."""
        n = self.photon_numbers
        R = n.shape[0]
        se = n.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(n.shape[1])
        return n.mean(axis=0), se


def evolve_micro_ensemble(
    rho0,
    L: Superoperator,
    family: Mapping[int, Superoperator],
    stats: InjectionStatistics,
    schedule: PumpSchedule,
    n_periods: int,
    seeds: Sequence[int],
    samples_per_period: int = 8,
    keep_states: bool = False,
) -> Ensemble:
    """Run one realization per seed, vectorized across realizations.

    Each realization owns ``numpy.random.default_rng(seed)``, so realization
    ``r`` equals a standalone :func:`evolve_micro_stochastic` run with
    ``seeds[r]``.
    """
    d = L.space.dim
    s = samples_per_period
    R = len(seeds)
    events = np.empty((R, n_periods), dtype=int)
    for r, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        events[r] = [sample_event(stats, rng) for _ in range(n_periods)]
    chans = _channels(family, stats, d)
    Eh = _decay_steps(L, schedule.period, s)
    # <n> = Tr(n rho) = sum_i i * rho_ii; diagonal entries sit at vec index i*(d+1)
    diag = np.arange(d) * (d + 1)
    weights = np.arange(d, dtype=float)
    X = np.tile(vec(np.asarray(rho0, dtype=complex))[:, None], (1, R))
    mean_out = np.empty((n_periods * s, d * d), dtype=complex)
    mean_kicked = np.empty((n_periods, d * d), dtype=complex)
    nums = np.empty((R, n_periods * s))
    full = np.empty((n_periods * s, d * d, R), dtype=complex) if keep_states else None
    full_kicked = np.empty((n_periods, d * d, R), dtype=complex) if keep_states else None
    for j in range(n_periods):
        for k, U in chans.items():
            if U is None:
                continue
            sel = events[:, j] == k
            if sel.any():
                X[:, sel] = U @ X[:, sel]
        mean_kicked[j] = X.mean(axis=1)
        if keep_states:
            full_kicked[j] = X
        for i in range(s):
            X = Eh @ X
            t = j * s + i
            mean_out[t] = X.mean(axis=1)
            nums[:, t] = weights @ X[diag].real
            if keep_states:
                full[t] = X
    ens = Ensemble(
        uniform_times(schedule, n_periods, s),
        _to_states(mean_out, d),
        _to_states(mean_kicked, d),
        nums,
        events,
        schedule,
        s,
    )
    if keep_states:
        ens.states = full.transpose(2, 0, 1).reshape(R, n_periods * s, d, d).transpose(0, 1, 3, 2).copy()
        ens.kicked = full_kicked.transpose(2, 0, 1).reshape(R, n_periods, d, d).transpose(0, 1, 3, 2).copy()
    return ens


def _limits(traj: Trajectory, rho0=None) -> tuple[np.ndarray, np.ndarray]:
    """Left and right limits of the state on the grid ``t = m h``, ``m = 0..N``."""
    N = len(traj)
    d = traj.states.shape[-1]
    s = traj.samples_per_period
    left = np.empty((N + 1, d, d), dtype=complex)
    right = np.empty((N + 1, d, d), dtype=complex)
    left[1:] = traj.states
    right[1:] = traj.states
    left[0] = np.nan if rho0 is None else rho0
    if traj.kicked is not None:
        right[0 : N + 1 : s][: len(traj.kicked)] = traj.kicked
    else:
        right[0] = np.nan if rho0 is None else rho0
    return left, right


def coarse_grain(traj: Trajectory, filt: CoarseGrainFilter) -> Trajectory:
    """Causal filter average ``sum_i w_i rho(t - tau_i)`` for ``t >= T0``.

    Each grid interval ``[t - (k+1)h, t - kh]`` is integrated with the
    trapezoid rule using the limits from inside the interval, so a kick at a
    grid point contributes the mean of its pre- and post-kick states.  Samples
    before ``T0`` are omitted.  Without ``traj.kicked`` the state at ``t = 0``
    is unknown and output starts one step later.
    """
    if filt.width < traj.schedule.period * (1 - 1e-12):
        raise ValueError("filter width below injection period")
    h = traj.step
    W = filt.grid_points(h)
    N = len(traj)
    if W > N:
        raise ValueError(f"trajectory spans {N * h:g}, shorter than the filter width {filt.width:g}")
    w = filt.weights(h)
    # point tau_i takes half its weight from each neighbouring interval:
    # the left limit from the interval above it, the right limit from the one below
    a = w.copy()
    b = w.copy()
    a[1:W] *= 0.5
    b[1:W] *= 0.5
    a[W] = 0.0
    b[0] = 0.0
    left, right = _limits(traj)
    d = traj.states.shape[-1]
    start = W if traj.kicked is not None else W + 1
    m = np.arange(start, N + 1)
    acc = np.zeros((len(m), d, d), dtype=complex)
    for i in range(W + 1):
        lo, hi = start - i, N + 1 - i
        if a[i]:
            acc += a[i] * left[lo:hi]
        if b[i]:
            acc += b[i] * right[lo:hi]
    return Trajectory(
        h * m.astype(float),
        acc,
        traj.schedule,
        traj.samples_per_period,
        None,
        {"filter": filt.kind, "width": filt.width},
    )


def limit_cycle(
    L: Superoperator,
    K: Superoperator,
    schedule: PumpSchedule,
    samples_per_period: int = 8,
    tol: float = 1e-10,
) -> Trajectory:
    """One period of the converged limit cycle, started from the stroboscopic fixed point.

    The pre-kick fixed point is the unit-eigenvalue eigenvector of
    ``exp(L T)(1 + K)``, found by a null-space solve rather than iteration.
    """
    d = L.space.dim
    P = propagator(L, schedule.period) @ (np.eye(d * d) + K.matrix)
    A = P - np.eye(d * d)
    _, sv, vh = np.linalg.svd(A)
    x = vh[-1].conj()
    rho = unvec(x, d)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    traj = evolve_micro(rho, L, K, schedule, 1, samples_per_period)
    drift = float(np.abs(traj.states[-1] - rho).max())
    traj.diagnostics.update({"fixed_point": rho, "closure": drift, "singular_gap": float(sv[-2])})
    if drift > max(tol, 1e-8):
        raise RuntimeError(f"limit cycle does not close: drift {drift:.3e}")
    return traj


def iterate_to_limit_cycle(rho0, L, K, schedule: PumpSchedule, max_periods: int = 2000, tol: float = 1e-10):
    """Iterate the stroboscopic map until consecutive period starts differ by < ``tol``.

    Returns ``(rho, periods, distance)``; ``distance`` is the trace distance
    of the last step.
    """
    from .observables import trace_distance

    d = L.space.dim
    P = propagator(L, schedule.period) @ (np.eye(d * d) + K.matrix)
    x = vec(np.asarray(rho0, dtype=complex))
    dist = np.inf
    for j in range(1, max_periods + 1):
        y = P @ x
        dist = trace_distance(unvec(y, d), unvec(x, d))
        x = y
        if dist < tol:
            return unvec(x, d), j, dist
    return unvec(x, d), max_periods, dist


def photon_trace(states: np.ndarray) -> np.ndarray:
    d = states.shape[-1]
    return np.einsum("tii,i->t", states, np.arange(d)).real
