"""Dense decompositions and spectral functions of symmetric matrices."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import ContractViolation, DecompositionError, EvaluationError

# relative threshold under which singular/eigen values count as zero
RANK_TOL = 1e-12


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


@dataclass(frozen=True)
class EvdResult:
    Q: np.ndarray
    lam: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.Q * self.lam) @ self.Q.T


def vec(X: np.ndarray) -> np.ndarray:
    """Stack the columns of ``X`` into one vector."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(v: np.ndarray, n1: int, n2: int) -> np.ndarray:
    return np.asarray(v).reshape((n1, n2), order="F")


def _fix_signs(U: np.ndarray, V: np.ndarray) -> None:
    # first nonzero entry of every left singular vector made positive
    for k in range(U.shape[1]):
        col = U[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            U[:, k] = -col
            V[:, k] = -V[:, k]


def thin_svd(M: np.ndarray, compute_uv: bool = True):
    """Raw thin SVD; falls back from the divide-and-conquer driver to gesvd.

    gesdd occasionally fails to converge on badly scaled input that gesvd handles.
    """
    M = np.asarray(M, dtype=float)
    try:
        return np.linalg.svd(M, full_matrices=False, compute_uv=compute_uv)
    except np.linalg.LinAlgError:
        pass
    try:
        return scipy.linalg.svd(M, full_matrices=False, compute_uv=compute_uv,
                                lapack_driver="gesvd", check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(str(exc)) from exc


def svd(M: np.ndarray) -> SvdResult:
    """Thin SVD with descending singular values and a fixed sign convention."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ContractViolation("svd input contains non-finite entries")
    U, s, Vt = thin_svd(M)
    U = U.copy()
    V = Vt.T.copy()
    _fix_signs(U, V)
    return SvdResult(U, s, V)


def singular_values(M: np.ndarray) -> np.ndarray:
    return thin_svd(M, compute_uv=False)


def check_symmetric(S: np.ndarray, rtol: float = 1e-12) -> None:
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {S.shape}")
    scale = max(np.linalg.norm(S), 1e-300)
    if np.linalg.norm(S - S.T) > rtol * scale:
        raise ContractViolation("matrix is not symmetric")


def evd_sym(S: np.ndarray, psd: bool = False) -> EvdResult:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    With ``psd=True`` round-off negatives are clamped to zero.
    """
    S = np.asarray(S, dtype=float)
    check_symmetric(S)
    S = 0.5 * (S + S.T)
    try:
        lam, Q = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(str(exc)) from exc
    lam = lam[::-1].copy()
    Q = Q[:, ::-1].copy()
    if psd:
        lam = np.maximum(lam, 0.0)
    return EvdResult(Q, lam)


def sym_matrix_function(S: np.ndarray, g: Callable[[np.ndarray], np.ndarray],
                        evd: EvdResult | None = None) -> np.ndarray:
    """Return ``Q diag(g(lam)) Q^T`` for the PSD matrix ``S = Q diag(lam) Q^T``."""
    if evd is None:
        evd = evd_sym(S, psd=True)
    vals = np.asarray(g(evd.lam), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("scalar function is not finite on the spectrum")
    F = (evd.Q * vals) @ evd.Q.T
    return 0.5 * (F + F.T)


def numerical_rank(values: np.ndarray, rtol: float = RANK_TOL) -> int:
    """Count entries above ``rtol`` times the largest magnitude."""
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0 or values.max() == 0.0:
        return 0
    return int(np.count_nonzero(values > rtol * values.max()))


def matrix_rank(M: np.ndarray, rtol: float = RANK_TOL) -> int:
    return numerical_rank(singular_values(M), rtol)


def nuclear_norm(M: np.ndarray) -> float:
    return float(singular_values(M).sum())


def psd_sqrt_parts(evd: EvdResult) -> tuple[np.ndarray, np.ndarray]:
    """Square root and inverse square root of a positive definite matrix."""
    r = np.sqrt(evd.lam)
    return (evd.Q * r) @ evd.Q.T, (evd.Q / r) @ evd.Q.T
