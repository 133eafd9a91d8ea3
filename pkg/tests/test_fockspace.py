import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density
from maserlab.fockspace import (
    DensityOperator,
    FockSpace,
    Superoperator,
    annihilation,
    choi_matrix,
    creation,
    dissipator,
    fock_state,
    left_mult,
    number,
    right_mult,
    sandwich,
    thermal_state,
    unvec,
    vec,
)


def test_annihilation_small_cases():
    assert np.array_equal(annihilation(FockSpace(0)), np.zeros((1, 1)))
    assert np.array_equal(annihilation(FockSpace(1)), np.array([[0, 1], [0, 0]]))
    a = annihilation(FockSpace(3))
    expected = np.zeros((4, 4))
    expected[0, 1], expected[1, 2], expected[2, 3] = 1, np.sqrt(2), np.sqrt(3)
    assert np.allclose(a, expected, atol=0)
    assert np.allclose(creation(FockSpace(3)), expected.T)


def test_number_is_adag_a():
    sp = FockSpace(6)
    a = annihilation(sp)
    assert np.allclose(a.conj().T @ a, number(sp), atol=1e-14)


def test_invalid_space():
    with pytest.raises(ValueError):
        FockSpace(-1)
    with pytest.raises(ValueError):
        FockSpace(1.5)


def test_vec_roundtrip_column_stacking():
    rho = np.arange(9).reshape(3, 3)
    v = vec(rho)
    assert list(v[:3]) == [0, 3, 6]
    assert np.array_equal(unvec(v), rho)


def test_identity_mult():
    sp = FockSpace(2)
    eye = np.eye(3)
    assert np.array_equal(left_mult(eye, sp).matrix, np.eye(9))
    assert np.array_equal(right_mult(eye, sp).matrix, np.eye(9))


def test_left_mult_two_level():
    A = np.array([[0, 1], [0, 0]])
    rho = np.array([[0, 0], [0, 1]])
    out = left_mult(A).apply(rho)
    assert np.array_equal(out, np.array([[0, 1], [0, 0]]))


def test_mult_matches_matrix_products():
    sp = FockSpace(2)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        rho = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        assert np.array_equal(left_mult(A, sp).apply(rho) - A @ rho, np.zeros((3, 3))) or np.allclose(
            left_mult(A, sp).apply(rho), A @ rho, atol=1e-14
        )
        assert np.allclose(right_mult(A, sp).apply(rho), rho @ A, atol=1e-14)


def test_left_right_commute(rng):
    sp = FockSpace(3)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    B = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    LA, RB = left_mult(A, sp).matrix, right_mult(B, sp).matrix
    assert np.abs(LA @ RB - RB @ LA).max() <= 1e-13


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        left_mult(np.eye(3), FockSpace(1))
    with pytest.raises(ValueError):
        dissipator(np.eye(2), FockSpace(2))
    with pytest.raises(ValueError):
        Superoperator(np.eye(3), FockSpace(1))


def test_dissipator_trivial_cases():
    sp = FockSpace(2)
    assert np.array_equal(dissipator(np.zeros((3, 3)), sp).matrix, np.zeros((9, 9)))
    assert np.abs(dissipator(np.eye(3), sp).matrix).max() == 0


def test_dissipator_two_level_decay():
    sp = FockSpace(1)
    out = dissipator(annihilation(sp), sp).apply(fock_state(sp, 1))
    assert np.allclose(out, np.diag([1.0, -1.0]), atol=1e-15)


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_dissipator_trace_and_hermiticity(n_max, seed):
    rng = np.random.default_rng(seed)
    sp = FockSpace(n_max)
    d = sp.dim
    C = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = random_density(d, rng)
    out = dissipator(C, sp).apply(rho)
    assert abs(np.trace(out)) <= 1e-12 * max(1.0, np.abs(C).max() ** 2)
    assert np.abs(out - out.conj().T).max() <= 1e-12 * max(1.0, np.abs(C).max() ** 2)


def test_superoperator_apply_consistent(rng):
    sp = FockSpace(2)
    M = rng.normal(size=(9, 9))
    S = Superoperator(M, sp)
    rho = rng.normal(size=(3, 3))
    assert np.allclose(S.apply(rho), unvec(M @ vec(rho)), atol=0)


def test_superoperator_algebra(rng):
    sp = FockSpace(1)
    A = Superoperator(rng.normal(size=(4, 4)), sp)
    B = Superoperator(rng.normal(size=(4, 4)), sp)
    assert np.allclose((A + B).matrix, A.matrix + B.matrix)
    assert np.allclose((A @ B).matrix, A.matrix @ B.matrix)
    assert np.allclose((2 * A - B).matrix, 2 * A.matrix - B.matrix)
    with pytest.raises(ValueError):
        A + Superoperator.identity(FockSpace(2))


def test_density_operator_validation():
    sp = FockSpace(1)
    DensityOperator(np.diag([0.25, 0.75]), sp)
    with pytest.raises(ValueError, match="Hermitian"):
        DensityOperator(np.array([[0.5, 0.1], [0.0, 0.5]]), sp)
    with pytest.raises(ValueError, match="trace"):
        DensityOperator(np.diag([0.5, 0.6]), sp)
    with pytest.raises(ValueError, match="negative"):
        DensityOperator(np.diag([1.5, -0.5]), sp)
    with pytest.raises(ValueError):
        DensityOperator(np.eye(3) / 3, sp)


def test_thermal_state_geometric():
    sp = FockSpace(20)
    rho = thermal_state(sp, 0.5)
    p = np.real(np.diag(rho))
    assert np.allclose(p[1:] / p[:-1], 1 / 3, rtol=1e-12)
    assert abs(p.sum() - 1) < 1e-14
    assert np.array_equal(thermal_state(sp, 0.0), fock_state(sp, 0))


def test_choi_matches_definition(rng):
    sp = FockSpace(2)
    d = 3
    S = Superoperator(rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9)), sp)
    J = np.zeros((9, 9), dtype=complex)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1
            J += np.kron(E, S.apply(E))
    assert np.allclose(choi_matrix(S), J, atol=1e-13)


def test_choi_of_unitary_channel_is_rank_one(rng):
    sp = FockSpace(2)
    U, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    J = choi_matrix(sandwich(U, U.conj().T, sp))
    ev = np.linalg.eigvalsh(J)
    assert ev.min() > -1e-12
    assert np.sum(ev > 1e-9) == 1
