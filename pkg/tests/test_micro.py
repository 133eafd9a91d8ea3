import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density
from maserlab.fockspace import FockSpace, Superoperator, fock_state, thermal_state
from maserlab.injection import InjectionStatistics, KickModel, PumpSchedule, average_kick, kick_family, single_atom_kick
from maserlab.liouvillian import CavityParams, build_cavity_liouvillian, propagator
from maserlab.micro import (
    CoarseGrainFilter,
    Trajectory,
    coarse_grain,
    evolve_micro,
    evolve_micro_ensemble,
    evolve_micro_stochastic,
    iterate_to_limit_cycle,
    limit_cycle,
    photon_trace,
    stroboscopic_step,
)
from maserlab.observables import trace_distance


def cavity(n_max, kappa=1.0, n_th=0.0):
    return build_cavity_liouvillian(FockSpace(n_max), CavityParams(kappa, n_th))


def kick(sp, theta, p=None):
    M1 = single_atom_kick(KickModel(theta, sp))
    stats = InjectionStatistics(p or {1: 1.0})
    return average_kick(stats, kick_family(M1, max(stats.k_max, 1)), sp)


def test_stroboscopic_step_cases(rng):
    sp = FockSpace(4)
    L = cavity(4, 1.0, 0.2)
    zero = Superoperator.zero(sp)
    rho = random_density(5, rng)
    E = propagator(L, 0.3)
    assert np.allclose(stroboscopic_step(rho, L, zero, 0.3), (E @ rho.reshape(-1, order="F")).reshape(5, 5, order="F"))
    out = stroboscopic_step(fock_state(sp, 0), zero, kick(sp, math.pi / 2), 1.0)
    assert np.abs(out - fock_state(sp, 1)).max() <= 1e-12
    assert np.array_equal(stroboscopic_step(rho, zero, zero, 1.0), rho)


def test_single_sample_is_decayed_state(rng):
    sp = FockSpace(3)
    L = cavity(3, 0.8, 0.1)
    rho = random_density(4, rng)
    traj = evolve_micro(rho, L, Superoperator.zero(sp), PumpSchedule(0.4), 1, 1)
    expected = (propagator(L, 0.4) @ rho.reshape(-1, order="F")).reshape(4, 4, order="F")
    assert len(traj) == 1 and traj.times[0] == pytest.approx(0.4)
    assert np.abs(traj.states[0] - expected).max() <= 1e-14


def test_time_grid():
    traj = evolve_micro(fock_state(FockSpace(2), 0), cavity(2), Superoperator.zero(FockSpace(2)), PumpSchedule(0.5), 3, 4)
    assert np.allclose(np.diff(traj.times), 0.125)
    assert traj.times[-1] == pytest.approx(1.5)
    assert traj.n_periods == 3 and traj.kicked.shape == (3, 3, 3)


def test_analytic_decay_over_fifty_periods():
    sp = FockSpace(6)
    traj = evolve_micro(fock_state(sp, 1), cavity(6), Superoperator.zero(sp), PumpSchedule(0.1), 50)
    assert traj.times[-1] == pytest.approx(5.0)
    n = photon_trace(traj.states)
    assert abs(n[-1] - math.exp(-5)) <= 1e-9
    assert np.abs(n - np.exp(-traj.times)).max() <= 1e-9


def test_jc_transfer_chain_without_damping():
    sp = FockSpace(5)
    theta = math.pi / 2
    K = kick(sp, theta)
    traj = evolve_micro(fock_state(sp, 0), Superoperator.zero(sp), K, PumpSchedule(1.0), 3, 1)
    # population transfer n -> n+1 with probability sin^2(theta sqrt(n+1)), one atom per period
    p = np.zeros(6)
    p[0] = 1
    for j in range(3):
        s2 = np.sin(theta * np.sqrt(np.arange(1, 7))) ** 2
        q = p * (1 - s2)
        q[1:] += (p * s2)[:-1]
        p = q
        assert np.abs(np.real(np.diag(traj.states[j])) - p).max() <= 1e-12
        assert np.abs(traj.states[j] - np.diag(np.diag(traj.states[j]))).max() <= 1e-15
    assert np.abs(traj.states[0] - fock_state(sp, 1)).max() <= 1e-12


@given(st.floats(0.1, 2.0), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_trace_and_positivity_along_trajectory(theta, n_th, seed):
    sp = FockSpace(8)
    rho0 = np.zeros((9, 9), dtype=complex)
    rho0[:4, :4] = random_density(4, np.random.default_rng(seed))
    traj = evolve_micro(rho0, cavity(8, 1.0, n_th), kick(sp, theta), PumpSchedule(0.5), 10, 4)
    tr = np.trace(traj.states, axis1=1, axis2=2)
    flux = np.real(traj.states[:, -1, -1]).max()
    if flux < 1e-12:
        assert np.abs(tr - 1).max() <= 1e-9
    herm = np.abs(traj.states - np.conj(np.swapaxes(traj.states, 1, 2))).max()
    assert herm <= 1e-10
    assert min(np.linalg.eigvalsh(s).min() for s in traj.states) >= -1e-9


def test_stochastic_deterministic_statistics():
    sp = FockSpace(4)
    L = cavity(4, 1.0, 0.1)
    M1 = single_atom_kick(KickModel(0.8, sp))
    fam = kick_family(M1, 1)
    rho0 = fock_state(sp, 0)
    sched = PumpSchedule(0.3)
    det = evolve_micro(rho0, L, M1, sched, 20)
    sto = evolve_micro_stochastic(rho0, L, fam, InjectionStatistics({1: 1.0}), sched, 20, seed=3)
    assert np.abs(det.states - sto.states).max() <= 1e-14
    empty = evolve_micro_stochastic(rho0 * 0 + fock_state(sp, 2), L, fam, InjectionStatistics({0: 1.0}), sched, 20, seed=3)
    decay = evolve_micro(fock_state(sp, 2), L, Superoperator.zero(sp), sched, 20)
    assert np.abs(empty.states - decay.states).max() <= 1e-14


def test_ensemble_realization_matches_standalone_run():
    sp = FockSpace(3)
    L = cavity(3)
    fam = kick_family(single_atom_kick(KickModel(1.0, sp)), 2)
    stats = InjectionStatistics({0: 0.3, 1: 0.4, 2: 0.3})
    sched = PumpSchedule(0.2)
    ens = evolve_micro_ensemble(fock_state(sp, 0), L, fam, stats, sched, 15, [11, 12, 13], keep_states=True)
    solo = evolve_micro_stochastic(fock_state(sp, 0), L, fam, stats, sched, 15, seed=12)
    assert np.abs(ens.realization(1).states - solo.states).max() <= 1e-14
    assert np.allclose(ens.mean_states, ens.states.mean(axis=0), atol=1e-14)
    n, se = ens.photon_number()
    assert np.allclose(n, photon_trace(ens.mean_states), atol=1e-13)
    assert se.shape == n.shape


def test_filter_shapes_integrate_to_one():
    for kind in ("rectangular", "triangular", "gaussian-truncated"):
        filt = CoarseGrainFilter(kind, 2.0)
        assert filt(np.array([-0.1, 2.1])).tolist() == [0.0, 0.0]
        w = filt.weights(0.01)
        assert abs(w.sum() - 1) <= 1e-10


def test_filter_validation():
    with pytest.raises(ValueError):
        CoarseGrainFilter("boxcar", 1.0)
    with pytest.raises(ValueError):
        CoarseGrainFilter("rectangular", 0.0)
    with pytest.raises(ValueError):
        CoarseGrainFilter("custom", 1.0)
    with pytest.raises(ValueError, match="multiple"):
        CoarseGrainFilter("rectangular", 1.05).weights(0.1)


def test_misnormalized_filter_rejected():
    filt = CoarseGrainFilter("custom", 1.0, profile=lambda tau: np.full_like(tau, 1.01))
    with pytest.raises(ValueError, match="integrates"):
        filt.weights(0.1)


def _const_traj(rho, n, s, T=1.0, kicked=True):
    states = np.repeat(rho[None], n * s, axis=0)
    k = np.repeat(rho[None], n, axis=0) if kicked else None
    return Trajectory(T / s * np.arange(1, n * s + 1), states, PumpSchedule(T), s, k)


@pytest.mark.parametrize("kind", ["rectangular", "triangular", "gaussian-truncated"])
def test_coarse_grain_constant(kind, rng):
    rho = random_density(3, rng)
    cg = coarse_grain(_const_traj(rho, 6, 8), CoarseGrainFilter(kind, 2.0))
    assert np.abs(cg.states - rho).max() <= 1e-14
    assert cg.times[0] == pytest.approx(2.0)


def test_coarse_grain_alternating_halves(rng):
    a, b = random_density(3, rng), random_density(3, rng)
    s, n = 2, 6
    # kicks switch b -> a at period starts and the state flips to b mid-period
    states = np.array([a, b] * n)
    kicked = np.array([a] * n)
    traj = Trajectory(0.5 * np.arange(1, 2 * n + 1), states, PumpSchedule(1.0), s, kicked)
    filt = CoarseGrainFilter("rectangular", 2.0)
    h = 0.5
    W = filt.grid_points(h)
    assert W == 4
    # piecewise-constant reference: on (jT, jT + T/2] the state is a, then b
    fine = 2000
    for m in range(W, 2 * n + 1):
        t = m * h
        tau = (np.arange(fine) + 0.5) * (2.0 / fine)
        phase = np.mod(t - tau, 1.0)
        ref = np.where(((phase > 0) & (phase <= 0.5))[:, None, None], a, b).mean(axis=0)
        got = coarse_grain(traj, filt).states[m - W]
        assert np.abs(got - 0.5 * (a + b)).max() <= 0.3
        assert np.abs(ref - 0.5 * (a + b)).max() <= 1e-12


def test_coarse_grain_two_sample_mean(rng):
    a, b = random_density(2, rng), random_density(2, rng)
    states = np.array([a, b] * 8)
    traj = Trajectory(0.5 * np.arange(1, 17), states, PumpSchedule(1.0), 2)
    cg = coarse_grain(traj, CoarseGrainFilter("rectangular", 2.0))
    assert np.abs(cg.states - 0.5 * (a + b)).max() <= 1e-14


@given(st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_coarse_grain_linear(lam, seed):
    rng = np.random.default_rng(seed)
    sp = FockSpace(3)
    L = cavity(3, 1.0, 0.2)
    K = kick(sp, 0.9)
    sched = PumpSchedule(0.5)
    r1, r2 = random_density(4, rng), random_density(4, rng)
    filt = CoarseGrainFilter("triangular", 1.5)
    t1 = evolve_micro(r1, L, K, sched, 6, 4)
    t2 = evolve_micro(r2, L, K, sched, 6, 4)
    mix = evolve_micro(lam * r1 + (1 - lam) * r2, L, K, sched, 6, 4)
    lhs = coarse_grain(mix, filt).states
    rhs = lam * coarse_grain(t1, filt).states + (1 - lam) * coarse_grain(t2, filt).states
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_coarse_grain_errors(rng):
    traj = _const_traj(random_density(2, rng), 2, 4)
    with pytest.raises(ValueError, match="below injection period"):
        coarse_grain(traj, CoarseGrainFilter("rectangular", 0.5))
    with pytest.raises(ValueError, match="shorter"):
        coarse_grain(traj, CoarseGrainFilter("rectangular", 3.0))


def test_coarse_grain_counts_kick_midpoint():
    # a jump at a grid point contributes the mean of the pre- and post-kick limits
    sp = FockSpace(1)
    rho0 = fock_state(sp, 0)
    K = kick(sp, math.pi / 2)
    traj = evolve_micro(rho0, Superoperator.zero(sp), K, PumpSchedule(1.0), 2, 1)
    cg = coarse_grain(traj, CoarseGrainFilter("rectangular", 1.0))
    # over (0, 1] the state is |1><1| everywhere after the first kick
    assert np.abs(cg.states[0] - fock_state(sp, 1)).max() <= 1e-12


def test_limit_cycle_fixed_point():
    # large enough that the top level stays empty, so the map is trace preserving
    sp = FockSpace(20)
    L = cavity(20, 1.0, 0.1)
    K = kick(sp, 1.0)
    sched = PumpSchedule(0.5)
    cyc = limit_cycle(L, K, sched, 8)
    rho = cyc.diagnostics["fixed_point"]
    assert cyc.diagnostics["closure"] < 1e-10
    assert np.abs(stroboscopic_step(rho, L, K, 0.5) - rho).max() < 1e-10
    it, periods, dist = iterate_to_limit_cycle(fock_state(sp, 0), L, K, sched, 2000, 1e-12)
    assert dist < 1e-12
    assert trace_distance(it, rho) < 1e-9


@pytest.mark.slow
def test_limit_cycle_convergence_reference_regime():
    sp = FockSpace(30)
    L = cavity(30, 1.0, 0.1)
    K = kick(sp, 1.0)
    _, periods, dist = iterate_to_limit_cycle(thermal_state(sp, 0.1), L, K, PumpSchedule(0.1), 2000, 1e-10)
    assert dist < 1e-10
    assert periods <= 2000
