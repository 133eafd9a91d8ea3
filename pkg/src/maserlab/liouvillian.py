"""Damped-cavity Liouvillian, its spectral decomposition and matrix functions.

The eigenvector basis of the damped oscillator generator becomes badly
conditioned as ``n_max`` grows (condition numbers near 1e13 at ``n_max=30``),
so an eigen-expansion ``V g(Lambda) V^-1`` in double precision loses most of
its digits to cancellation.  :func:`spectral_decompose` therefore splits the
superoperator into its decoupled blocks (for the cavity these are the sectors
of fixed photon-number difference) and re-solves every ill-conditioned block
with mpmath at a working precision chosen from its condition number.
:func:`lift_scalar_function` evaluates the scalar function and the product
in that same precision before rounding back to complex128.
"""
from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
import scipy.linalg as la
from scipy.sparse.csgraph import connected_components

from .errors import NearDefectiveError, PoleProximityError
from .fockspace import FockSpace, Superoperator, annihilation, creation, dissipator, unvec, vec

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps

#: blocks whose eigenvector condition number exceeds this are re-solved in extended precision
ESCALATE_CONDITION = 1e6
#: reconstruction residual above which a generator counts as near-defective
DEFECT_RESIDUAL = 1e-6


@dataclass(frozen=True)
class CavityParams:
    kappa: float
    n_th: float = 0.0

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not self.n_th >= 0:
            raise ValueError(f"n_th must be >= 0, got {self.n_th}")


def build_cavity_liouvillian(space: FockSpace, params: CavityParams) -> Superoperator:
    """Zero-detuning thermal damped cavity, ``k(n+1) D[a] + k n D[a^+]``."""
    a = annihilation(space)
    L = params.kappa * (params.n_th + 1) * dissipator(a, space)
    if params.n_th > 0:
        L = L + params.kappa * params.n_th * dissipator(creation(space), space)
    return L


@dataclass
class SpectralBlock:
    """Eigen-decomposition of one decoupled block of a superoperator."""

    index: np.ndarray
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    condition: float
    # extended-precision copies, present only for escalated blocks
    mp_eigenvalues: list | None = None
    mp_right: object = None
    mp_left: object = None
    dps: int | None = None


@dataclass
class SpectralDecomposition:
    """Eigenvalues and biorthonormal eigenbases of a superoperator.

    ``right_vectors`` holds right eigenvectors as columns and ``left_vectors``
    the matching left eigenvectors as rows, so that
    ``right_vectors @ diag(eigenvalues) @ left_vectors`` reproduces the source.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    condition_estimate: float
    residual: float
    space: FockSpace | None = None
    blocks: list[SpectralBlock] = field(default_factory=list, repr=False)

    @property
    def escalated_blocks(self) -> int:
        return sum(b.dps is not None for b in self.blocks)

    def kernel_mask(self, kernel_tol: float) -> np.ndarray:
        return np.abs(self.eigenvalues) <= kernel_tol


def _blocks_of(matrix: np.ndarray) -> list[np.ndarray]:
    ncomp, labels = connected_components(np.abs(matrix) > 0, directed=False)
    return [np.flatnonzero(labels == c) for c in range(ncomp)]


def _normalized_eig(A: np.ndarray):
    w, V = la.eig(A)
    V = V / np.linalg.norm(V, axis=0)
    return w, V


def _symmetrizable_tridiagonal(A: np.ndarray) -> bool:
    if np.any(A.imag) or A.shape[0] < 2:
        return False
    R = A.real
    if np.any(np.triu(R, 2)) or np.any(np.tril(R, -2)):
        return False
    return bool(np.all(np.diag(R, 1) * np.diag(R, -1) > 0))


def _mp_eig_tridiagonal(A: np.ndarray):
    """Real tridiagonal ``A`` with positive off-diagonal products.

    ``D^-1 A D`` is symmetric for a diagonal ``D``, so ``A = (D Q) W (Q^T D^-1)``
    with an orthogonal ``Q``; this avoids a general complex QR and an inverse.
    """
    R = A.real
    n = R.shape[0]
    up = [mpmath.mpf(x) for x in np.diag(R, 1)]
    lo = [mpmath.mpf(x) for x in np.diag(R, -1)]
    d = [mpmath.mpf(1)]
    for k in range(n - 1):
        d.append(d[-1] * mpmath.sqrt(lo[k] / up[k]))
    S = mpmath.zeros(n)
    for i in range(n):
        S[i, i] = mpmath.mpf(R[i, i])
    for k in range(n - 1):
        S[k, k + 1] = S[k + 1, k] = mpmath.sqrt(up[k] * lo[k])
    w, Q = mpmath.eigsy(S)
    V = mpmath.diag(d) * Q
    Vi = Q.T * mpmath.diag([1 / x for x in d])
    return [w[i] for i in range(n)], V, Vi


def _mp_eig(A: np.ndarray, dps: int):
    with mpmath.workdps(dps):
        if _symmetrizable_tridiagonal(A):
            return _mp_eig_tridiagonal(A)
        M = mpmath.matrix(A.real.tolist() if not np.any(A.imag) else A.tolist())
        w, V = mpmath.eig(M)
        Vi = mpmath.inverse(V)
    return w, V, Vi


def _decompose_block(A: np.ndarray, idx: np.ndarray, precision: str) -> SpectralBlock:
    n = A.shape[0]
    if not np.any(A):
        eye = np.eye(n, dtype=complex)
        return SpectralBlock(idx, np.zeros(n, dtype=complex), eye, eye.copy(), 1.0)
    w, V = _normalized_eig(A)
    s = np.linalg.svd(V, compute_uv=False)
    cond = np.inf if s[-1] == 0 else s[0] / s[-1]
    if precision == "double" or (precision == "auto" and cond < ESCALATE_CONDITION):
        try:
            left = la.solve(V, np.eye(n))
        except la.LinAlgError as exc:
            raise NearDefectiveError(np.inf) from exc
        return SpectralBlock(idx, w, V, left, cond)

    digits = 16 + (0 if not np.isfinite(cond) else int(math.log10(max(cond, 1.0))))
    dps = max(30, digits + 12)
    try:
        mw, mV, mVi = _mp_eig(A, dps)
    except ZeroDivisionError as exc:
        raise NearDefectiveError(np.inf) from exc
    with mpmath.workdps(dps):
        # columns normalized the same way as the double-precision path
        for j in range(n):
            nrm = mpmath.sqrt(mpmath.fsum(abs(mV[i, j]) ** 2 for i in range(n)))
            for i in range(n):
                mV[i, j] /= nrm
            for i in range(n):
                mVi[j, i] *= nrm
    right = np.array(mV.tolist(), dtype=complex)
    left = np.array(mVi.tolist(), dtype=complex)
    eig = np.array([complex(x) for x in mw])
    s = np.linalg.svd(right, compute_uv=False)
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    return SpectralBlock(idx, eig, right, left, cond, list(mw), mV, mVi, dps)


def _block_reconstruction(block: SpectralBlock, A: np.ndarray) -> float:
    """Absolute Frobenius reconstruction error of one block."""
    if block.dps is None:
        R = (block.right * block.eigenvalues) @ block.left
        return float(np.linalg.norm(R - A))
    with mpmath.workdps(block.dps):
        R = block.mp_right * mpmath.diag(block.mp_eigenvalues) * block.mp_left
        diff = np.array(R.tolist(), dtype=complex) - A
    return float(np.linalg.norm(diff))


def spectral_decompose(S, precision: str = "auto") -> SpectralDecomposition:
    """Diagonalize a superoperator block by block.

    Parameters
    ----------
    S : Superoperator or (n, n) ndarray
    precision : {"auto", "double", "extended"}
        ``"auto"`` escalates only blocks whose eigenvector condition number
        exceeds :data:`ESCALATE_CONDITION`.

    Raises
    ------
    NearDefectiveError
        If the relative reconstruction residual exceeds ``1e-6``.
    """
    if precision not in ("auto", "double", "extended"):
        raise ValueError(f"unknown precision {precision!r}")
    space = S.space if isinstance(S, Superoperator) else None
    M = np.asarray(S.matrix if isinstance(S, Superoperator) else S, dtype=complex)
    n = M.shape[0]
    blocks = []
    for idx in _blocks_of(M):
        blocks.append(_decompose_block(M[np.ix_(idx, idx)], idx, precision))

    eigenvalues = np.empty(n, dtype=complex)
    right = np.zeros((n, n), dtype=complex)
    left = np.zeros((n, n), dtype=complex)
    smax, smin, err2 = 0.0, np.inf, 0.0
    for b in blocks:
        # eigenpairs are stored at the positions of the block's own indices
        eigenvalues[b.index] = b.eigenvalues
        right[np.ix_(b.index, b.index)] = b.right
        left[np.ix_(b.index, b.index)] = b.left
        sv = np.linalg.svd(b.right, compute_uv=False)
        smax, smin = max(smax, sv[0]), min(smin, sv[-1])
        err2 += _block_reconstruction(b, M[np.ix_(b.index, b.index)]) ** 2
    cond = smax / smin if smin > 0 else np.inf
    norm = np.linalg.norm(M)
    residual = math.sqrt(err2) / norm if norm > 0 else math.sqrt(err2)
    if not residual <= DEFECT_RESIDUAL:
        raise NearDefectiveError(residual)
    escalated = sum(b.dps is not None for b in blocks)
    if escalated:
        logger.debug("spectral_decompose: %d/%d blocks in extended precision", escalated, len(blocks))
    return SpectralDecomposition(eigenvalues, right, left, float(cond), residual, space, blocks)


def default_kernel_tol(eigenvalues: Sequence[complex], kappa: float | None = None) -> float:
    """``1e-9 * kappa``, or ``1e-9`` times the spectral radius when no rate is given."""
    if kappa is not None and kappa > 0:
        return 1e-9 * kappa
    radius = float(np.max(np.abs(eigenvalues))) if len(eigenvalues) else 0.0
    return 1e-9 * radius if radius > 0 else 1e-12


def _is_mp(x) -> bool:
    return isinstance(x, (mpmath.mpf, mpmath.mpc))


def maser_kernel(T: float) -> Callable:
    """Scalar function ``lam -> lam / (1 - exp(-lam T))`` written without overflow.

    Accepts Python/numpy complex numbers and mpmath numbers.  The removable
    singularity at ``lam = 0`` is not handled here (its value is ``1/T``).
    """

    def g(lam):
        if _is_mp(lam):
            x = lam * T
            if mpmath.re(x) < 0:
                return lam * mpmath.exp(x) / mpmath.expm1(x)
            return -lam / mpmath.expm1(-x)
        lam = complex(lam)
        x = lam * T
        if x.real < 0:
            return lam * cmath.exp(x) / _expm1(x)
        return -lam / _expm1(-x)

    g.kernel_value = 1.0 / T
    return g


def _expm1(z: complex) -> complex:
    # cmath has no expm1; split exp(x+iy)-1 to keep precision for small |z|
    x, y = z.real, z.imag
    if abs(z) > 0.5:
        return cmath.exp(z) - 1
    return complex(math.expm1(x) * math.cos(y) - 2 * math.sin(y / 2) ** 2, math.exp(x) * math.sin(y))


def lift_scalar_function(
    dec: SpectralDecomposition,
    f: Callable,
    kernel_value: complex,
    kernel_tol: float,
    pole_ratio: float = 1e6,
) -> Superoperator | np.ndarray:
    """Evaluate ``f`` on the superoperator through its spectral decomposition.

    Eigenvalues with ``|lam| <= kernel_tol`` receive ``kernel_value`` instead of
    ``f(lam)``.  Escalated blocks call ``f`` with mpmath numbers when it
    supports them.

    Raises
    ------
    PoleProximityError
        When ``f`` is non-finite at an eigenvalue, or (for nonzero
        ``kernel_value``) exceeds ``pole_ratio * |kernel_value|`` there.
    """
    n = dec.eigenvalues.shape[0]
    out = np.zeros((n, n), dtype=complex)
    bound = pole_ratio * abs(kernel_value)

    def guard(lam, val):
        if not cmath.isfinite(val):
            raise PoleProximityError(lam, val)
        if bound > 0 and abs(val) > bound:
            raise PoleProximityError(lam, val)

    for b in dec.blocks:
        idx = np.ix_(b.index, b.index)
        if b.dps is not None:
            try:
                with mpmath.workdps(b.dps):
                    g = []
                    for lam in b.mp_eigenvalues:
                        if abs(lam) <= kernel_tol:
                            g.append(mpmath.mpmathify(kernel_value))
                            continue
                        val = f(lam)
                        if not _is_mp(val):
                            raise TypeError("scalar function does not support mpmath")
                        guard(complex(lam), complex(val))
                        g.append(val)
                    F = b.mp_right * mpmath.diag(g) * b.mp_left
                out[idx] = np.array(F.tolist(), dtype=complex)
                continue
            except TypeError:
                logger.warning("scalar function evaluated in double precision on an ill-conditioned block")
        g = np.empty(b.eigenvalues.shape[0], dtype=complex)
        for i, lam in enumerate(b.eigenvalues):
            if abs(lam) <= kernel_tol:
                g[i] = kernel_value
            else:
                g[i] = f(complex(lam))
                guard(lam, g[i])
        out[idx] = (b.right * g) @ b.left
    if dec.space is not None:
        return Superoperator(out, dec.space)
    return out


def kernel_projector(dec: SpectralDecomposition, kernel_tol: float) -> np.ndarray:
    """Spectral projector onto eigenvalues with ``|lam| <= kernel_tol``."""
    out = lift_scalar_function(dec, lambda lam: lam * 0, 1.0, kernel_tol, pole_ratio=np.inf)
    return out.matrix if isinstance(out, Superoperator) else out


def propagator(S, t: float) -> np.ndarray:
    """Dense ``expm(S t)`` (scaling and squaring)."""
    M = S.matrix if isinstance(S, Superoperator) else np.asarray(S)
    return la.expm(M * t)


def exp_action(S, t: float, rho, method: str = "expm", dec: SpectralDecomposition | None = None) -> np.ndarray:
    """Return ``exp(S t) rho``.

    ``method="expm"`` uses scaling and squaring on the full matrix;
    ``method="spectral"`` goes through ``dec`` (computed if not given).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    if t == 0:
        return rho.copy()
    if method == "expm":
        return unvec(propagator(S, t) @ vec(rho), d)
    if method == "spectral":
        dec = dec or spectral_decompose(S)
        E = lift_scalar_function(dec, lambda lam: _exp(lam * t), 1.0, 0.0, pole_ratio=np.inf)
        E = E.matrix if isinstance(E, Superoperator) else E
        return unvec(E @ vec(rho), d)
    raise ValueError(f"unknown method {method!r}")


def _exp(z):
    return mpmath.exp(z) if _is_mp(z) else cmath.exp(z)
