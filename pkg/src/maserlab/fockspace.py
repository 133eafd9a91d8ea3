"""Truncated Fock-space operators and superoperator vectorization.

All superoperators use column stacking: ``vec(rho) = rho.flatten(order="F")``,
so that ``vec(A @ rho @ B) = kron(B.T, A) @ vec(rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FockSpace:
    """Single cavity mode truncated at ``n_max`` photons."""

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise ValueError(f"n_max must be a non-negative integer, got {self.n_max!r}")

    @property
    def dim(self) -> int:
        return self.n_max + 1

    @property
    def super_dim(self) -> int:
        return self.dim**2

    def check_operator(self, A) -> np.ndarray:
        A = np.asarray(A)
        if A.shape != (self.dim, self.dim):
            raise ValueError(f"operator of shape {A.shape} does not act on a space of dimension {self.dim}")
        return A


def vec(rho) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.shape[0])))
    return v.reshape((dim, dim) + v.shape[1:], order="F")


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Linear map on operators stored as a ``d**2 x d**2`` matrix (column stacking)."""

    matrix: np.ndarray
    space: FockSpace

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.super_dim
        if m.shape != (n, n):
            raise ValueError(f"superoperator matrix has shape {m.shape}, expected {(n, n)}")
        object.__setattr__(self, "matrix", m)

    def apply(self, rho) -> np.ndarray:
        rho = self.space.check_operator(rho)
        return unvec(self.matrix @ vec(rho), self.space.dim)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Superoperator):
            if other.space != self.space:
                raise ValueError("superoperators act on different spaces")
            return other.matrix
        return np.asarray(other)

    def __add__(self, other):
        return Superoperator(self.matrix + self._coerce(other), self.space)

    def __sub__(self, other):
        return Superoperator(self.matrix - self._coerce(other), self.space)

    def __matmul__(self, other):
        return Superoperator(self.matrix @ self._coerce(other), self.space)

    def __mul__(self, scalar):
        return Superoperator(scalar * self.matrix, self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return Superoperator(-self.matrix, self.space)

    @classmethod
    def identity(cls, space: FockSpace) -> "Superoperator":
        return cls(np.eye(space.super_dim, dtype=complex), space)

    @classmethod
    def zero(cls, space: FockSpace) -> "Superoperator":
        return cls(np.zeros((space.super_dim,) * 2, dtype=complex), space)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Validated density matrix; construction raises ``ValueError`` on violation."""

    matrix: np.ndarray
    space: FockSpace
    hermitian_tol: float = 1e-12
    trace_tol: float = 1e-12
    positivity_tol: float = 1e-10
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.asarray(self.space.check_operator(self.matrix), dtype=complex)
        object.__setattr__(self, "matrix", m)
        herm = np.max(np.abs(m - m.conj().T))
        if herm > self.hermitian_tol:
            raise ValueError(f"not Hermitian (max deviation {herm:.3e})")
        tr = np.trace(m)
        if abs(tr - 1) > self.trace_tol:
            raise ValueError(f"trace {tr.real:.15g} differs from 1")
        lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
        if lam < -self.positivity_tol:
            raise ValueError(f"minimum eigenvalue {lam:.3e} is negative")


def annihilation(space: FockSpace) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, space.dim, dtype=float)), 1).astype(complex)


def creation(space: FockSpace) -> np.ndarray:
    return annihilation(space).conj().T


def number(space: FockSpace) -> np.ndarray:
    return np.diag(np.arange(space.dim, dtype=float)).astype(complex)


def fock_state(space: FockSpace, n: int) -> np.ndarray:
    if not 0 <= n <= space.n_max:
        raise ValueError(f"Fock level {n} outside 0..{space.n_max}")
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    rho[n, n] = 1.0
    return rho


def thermal_state(space: FockSpace, n_th: float) -> np.ndarray:
    """Thermal state restricted to the truncated space and renormalized."""
    if n_th == 0:
        return fock_state(space, 0)
    n = np.arange(space.dim)
    # log-weights avoid underflow for large n_max
    logp = n * (np.log(n_th) - np.log1p(n_th))
    p = np.exp(logp - logp.max())
    return np.diag(p / p.sum()).astype(complex)


def left_mult(A, space: FockSpace | None = None) -> Superoperator:
    """Superoperator of ``rho -> A @ rho``."""
    A = np.asarray(A, dtype=complex)
    space = space or FockSpace(A.shape[0] - 1)
    space.check_operator(A)
    return Superoperator(np.kron(np.eye(space.dim), A), space)


def right_mult(A, space: FockSpace | None = None) -> Superoperator:
    """Superoperator of ``rho -> rho @ A``."""
    A = np.asarray(A, dtype=complex)
    space = space or FockSpace(A.shape[0] - 1)
    space.check_operator(A)
    return Superoperator(np.kron(A.T, np.eye(space.dim)), space)


def sandwich(A, B, space: FockSpace | None = None) -> Superoperator:
    """Superoperator of ``rho -> A @ rho @ B``."""
    A = np.asarray(A, dtype=complex)
    space = space or FockSpace(A.shape[0] - 1)
    space.check_operator(A)
    space.check_operator(B)
    return Superoperator(np.kron(np.asarray(B, dtype=complex).T, A), space)


def dissipator(C, space: FockSpace | None = None) -> Superoperator:
    """Lindblad term ``rho -> C rho C^+ - (C^+C rho + rho C^+C)/2``."""
    C = np.asarray(C, dtype=complex)
    space = space or FockSpace(C.shape[0] - 1)
    space.check_operator(C)
    CdC = C.conj().T @ C
    return sandwich(C, C.conj().T, space) - 0.5 * (left_mult(CdC, space) + right_mult(CdC, space))


def choi_matrix(S: Superoperator) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) S(|i><j|)``; PSD iff ``S`` is completely positive."""
    d = S.space.dim
    # column (i, j) of S.matrix is vec(S(|i><j|)) at index i + d*j
    blocks = S.matrix.reshape(d, d, d, d, order="F")  # [a, b, i, j] -> <a|S(|i><j|)|b>
    return blocks.transpose(2, 0, 3, 1).reshape(d * d, d * d)
