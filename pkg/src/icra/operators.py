"""Linear measurement operators ``A: R^{n1 x n2} -> R^m``.

Two realizations are supported: a dense sensing matrix acting on the
column-stacked ``vec(X)``, and entry sampling on an index set (matrix
completion).  Both expose the adjoint, orthonormal bases of the row space and
null space, and Euclidean projection onto ``{X : A(X) = b}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, DomainError, RankDeficientError
from .linalg import unvec, vec

DENSE = "dense"
SAMPLING = "sampling"


@dataclass(frozen=True)
class NullSpaceBasis:
    """Orthonormal basis of N(A) under the trace inner product, shape (k, n1, n2)."""

    basis: np.ndarray

    def __len__(self) -> int:
        return self.basis.shape[0]

    @property
    def matrices(self) -> list[np.ndarray]:
        return list(self.basis)

    def combine(self, coeffs: np.ndarray) -> np.ndarray:
        return np.tensordot(coeffs, self.basis, axes=1)


def _columns_to_matrices(B: np.ndarray, n1: int, n2: int) -> np.ndarray:
    return B.T.reshape(B.shape[1], n2, n1).transpose(0, 2, 1)


class MeasurementOperator:
    kind: str
    n1: int
    n2: int
    m: int

    @property
    def nn(self) -> int:
        return self.n1 * self.n2

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape != (self.n1, self.n2):
            raise DimensionMismatch(f"expected a {self.n1}x{self.n2} matrix, got {X.shape}")
        return X

    def _check_y(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != self.m:
            raise DimensionMismatch(f"expected {self.m} measurements, got {y.shape[0]}")
        return y

    def apply(self, X) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y) -> np.ndarray:
        raise NotImplementedError

    def affine_project(self, b, X) -> np.ndarray:
        raise NotImplementedError

    def row_basis(self) -> np.ndarray:
        """Orthonormal basis (nn x m) of the row space, in vec coordinates."""
        raise NotImplementedError

    def null_basis(self) -> np.ndarray:
        """Orthonormal basis (nn x (nn - m)) of the null space, in vec coordinates."""
        raise NotImplementedError

    def null_space_basis(self) -> NullSpaceBasis:
        return NullSpaceBasis(_columns_to_matrices(self.null_basis(), self.n1, self.n2))

    def min_norm_solution(self, b) -> np.ndarray:
        return self.affine_project(b, np.zeros((self.n1, self.n2)))

    def to_dict(self, include_data: bool = True) -> dict:
        raise NotImplementedError


class DenseOperator(MeasurementOperator):
    """``A(X) = A @ vec(X)`` for a full-row-rank ``m x (n1 n2)`` matrix."""

    kind = DENSE

    def __init__(self, A, n1: int, n2: int, seed: int | None = None):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[1] != n1 * n2:
            raise DimensionMismatch(f"sensing matrix must have {n1 * n2} columns")
        if A.shape[0] > n1 * n2:
            raise DomainError("more measurements than unknowns")
        self.A = A
        self.n1, self.n2, self.m = int(n1), int(n2), A.shape[0]
        self.seed = seed
        # A^T = Q R, so R^T R = A A^T is the Cholesky factor of the Gram matrix
        Q, R = np.linalg.qr(A.T, mode="reduced")
        d = np.abs(np.diag(R))
        if self.m and (d.min() <= 1e-10 * d.max() or not np.all(np.isfinite(d))):
            raise RankDeficientError("sensing matrix is not full row rank")
        self._Q, self._R = Q, R

    @classmethod
    def gaussian(cls, n1: int, n2: int, m: int, rng: np.random.Generator,
                 seed: int | None = None) -> "DenseOperator":
        if m > n1 * n2:
            raise DomainError("m exceeds n1 * n2")
        return cls(rng.standard_normal((m, n1 * n2)), n1, n2, seed=seed)

    def apply(self, X) -> np.ndarray:
        return self.A @ vec(self._check_X(X))

    def adjoint(self, y) -> np.ndarray:
        return unvec(self.A.T @ self._check_y(y), self.n1, self.n2)

    def affine_project(self, b, X) -> np.ndarray:
        x = vec(self._check_X(X))
        c = solve_triangular(self._R, self._check_y(b), trans="T")
        x = x - self._Q @ (self._Q.T @ x - c)
        return unvec(x, self.n1, self.n2)

    def row_basis(self) -> np.ndarray:
        return self._Q

    @cached_property
    def _null(self) -> np.ndarray:
        Qc, _ = np.linalg.qr(self.A.T, mode="complete")
        return np.ascontiguousarray(Qc[:, self.m:])

    def null_basis(self) -> np.ndarray:
        return self._null

    def to_dict(self, include_data: bool = True) -> dict:
        d = {"kind": DENSE, "n1": self.n1, "n2": self.n2, "m": self.m}
        if self.seed is not None:
            d["seed"] = self.seed
        if include_data or self.seed is None:
            d["A"] = self.A.tolist()
        return d


class SamplingOperator(MeasurementOperator):
    """Observes the entries of ``X`` on an index set.

    Measurements are ordered column-major, i.e. by ``(j, i)``, which makes
    full observation return ``vec(X)``.
    """

    kind = SAMPLING

    def __init__(self, rows, cols, n1: int, n2: int, seed: int | None = None):
        rows = np.asarray(rows, dtype=int).reshape(-1)
        cols = np.asarray(cols, dtype=int).reshape(-1)
        if rows.shape != cols.shape:
            raise DimensionMismatch("row and column index arrays differ in length")
        if rows.size and (rows.min() < 0 or rows.max() >= n1 or cols.min() < 0 or cols.max() >= n2):
            raise DomainError("sample index out of range")
        flat = cols * n1 + rows
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        if flat.size > 1 and np.any(np.diff(flat) == 0):
            raise DomainError("duplicate sample positions")
        self.n1, self.n2, self.m = int(n1), int(n2), int(flat.size)
        self.idx = flat
        self.rows = flat % n1
        self.cols = flat // n1
        self.seed = seed

    @classmethod
    def uniform(cls, n1: int, n2: int, m: int, rng: np.random.Generator,
                seed: int | None = None) -> "SamplingOperator":
        if m > n1 * n2:
            raise DomainError("m exceeds n1 * n2")
        flat = np.sort(rng.choice(n1 * n2, size=m, replace=False))
        return cls(flat % n1, flat // n1, n1, n2, seed=seed)

    @classmethod
    def from_mask(cls, mask) -> "SamplingOperator":
        mask = np.asarray(mask, dtype=bool)
        r, c = np.nonzero(mask)
        return cls(r, c, *mask.shape)

    @property
    def mask(self) -> np.ndarray:
        out = np.zeros(self.nn, dtype=bool)
        out[self.idx] = True
        return unvec(out, self.n1, self.n2)

    def apply(self, X) -> np.ndarray:
        return vec(self._check_X(X))[self.idx]

    def adjoint(self, y) -> np.ndarray:
        out = np.zeros(self.nn)
        out[self.idx] = self._check_y(y)
        return unvec(out, self.n1, self.n2)

    def affine_project(self, b, X) -> np.ndarray:
        x = vec(self._check_X(X)).copy()
        x[self.idx] = self._check_y(b)
        return unvec(x, self.n1, self.n2)

    def row_basis(self) -> np.ndarray:
        return np.eye(self.nn)[:, self.idx]

    def null_basis(self) -> np.ndarray:
        keep = np.ones(self.nn, dtype=bool)
        keep[self.idx] = False
        return np.eye(self.nn)[:, keep]

    def to_dict(self, include_data: bool = True) -> dict:
        d = {"kind": SAMPLING, "n1": self.n1, "n2": self.n2, "m": self.m}
        if self.seed is not None:
            d["seed"] = self.seed
        if include_data or self.seed is None:
            d["omega"] = [[int(i), int(j)] for i, j in zip(self.rows, self.cols)]
        return d


def operator_from_dict(d: dict) -> MeasurementOperator:
    """Rebuild an operator from explicit data, or regenerate it from its seed."""
    kind = d.get("kind")
    n1, n2, m = int(d["n1"]), int(d["n2"]), int(d["m"])
    if kind == DENSE:
        if "A" in d:
            return DenseOperator(np.asarray(d["A"], dtype=float), n1, n2, seed=d.get("seed"))
        return DenseOperator.gaussian(n1, n2, m, np.random.default_rng(int(d["seed"])), seed=int(d["seed"]))
    if kind == SAMPLING:
        if "omega" in d:
            om = np.asarray(d["omega"], dtype=int).reshape(-1, 2)
            op = SamplingOperator(om[:, 0], om[:, 1], n1, n2, seed=d.get("seed"))
        else:
            op = SamplingOperator.uniform(n1, n2, m, np.random.default_rng(int(d["seed"])), seed=int(d["seed"]))
        if op.m != m:
            raise DimensionMismatch("omega size does not match m")
        return op
    raise DomainError(f"unknown operator kind {kind!r}")
