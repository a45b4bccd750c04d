"""Numerical checks of the recovery theory.

Null-space concentration ratios and the spherical section constant are
estimated by sampling random null-space elements, so they are reported as
bounds with an explicit direction: a sampled maximum is a lower bound on a
supremum and a sampled minimum is an upper bound on an infimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DimensionMismatch, DomainError
from .linalg import RANK_TOL, evd_sym, matrix_rank, singular_values, svd
from .mm import embed
from .operators import MeasurementOperator
from .ua import UAFamily, ua_eval, ua_inverse

RANK = "rank"
NUCLEAR = "nuclear"
UA = "ua"

_CHUNK = 2000


@dataclass(frozen=True)
class Surrogate:
    """A spectral cost ``sum_i g(sigma_i)``: the unit step, the identity, or a UA function."""

    kind: str
    fam: UAFamily | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in (RANK, NUCLEAR, UA):
            raise DomainError(f"unknown surrogate {self.kind!r}")
        if self.kind == UA and (self.fam is None or not (self.delta and self.delta > 0)):
            raise DomainError("a UA surrogate needs a family and delta > 0")

    @classmethod
    def rank(cls) -> "Surrogate":
        return cls(RANK)

    @classmethod
    def nuclear(cls) -> "Surrogate":
        return cls(NUCLEAR)

    @classmethod
    def ua(cls, fam: UAFamily | None = None, delta: float = 1.0) -> "Surrogate":
        return cls(UA, fam or UAFamily(), float(delta))

    def values(self, sigma: np.ndarray) -> np.ndarray:
        """Per-entry cost of one or more descending spectra (last axis)."""
        sigma = np.asarray(sigma, dtype=float)
        if self.kind == NUCLEAR:
            return sigma
        if self.kind == RANK:
            lead = sigma[..., :1] if sigma.shape[-1] else sigma
            return (sigma > RANK_TOL * lead).astype(float)
        return ua_eval(self.fam, self.delta, sigma)

    def total(self, M: np.ndarray) -> float:
        return float(self.values(singular_values(M)).sum())

    def label(self) -> str:
        if self.kind == UA:
            return f"ua[{self.fam.kind},delta={self.delta:g}]"
        return self.kind


def _head_ratio(vals: np.ndarray, r: int) -> np.ndarray:
    tot = vals.sum(axis=-1)
    return vals[..., :r].sum(axis=-1) / tot


def theta_ratio(W: np.ndarray, r: int, surrogate: Surrogate) -> float:
    """Share of the surrogate carried by the ``r`` largest singular values of ``W``."""
    s = singular_values(W)
    if r < 0 or r > s.size:
        raise DomainError(f"r must lie in [0, {s.size}]")
    if s[0] == 0.0:
        raise DomainError("ratio is undefined for W = 0")
    return float(_head_ratio(surrogate.values(s), r))


@dataclass
class ThetaEstimate:
    r: int
    n_samples: int
    max_ratio: float
    argmax_seed: int
    argmax_index: int
    surrogate: str = ""
    is_lower_bound: bool = True


@dataclass
class SphericalEstimate:
    n_samples: int
    min_ratio: float
    seed: int = 0
    argmin_index: int = 0
    is_upper_bound: bool = True


def _check_null(op: MeasurementOperator) -> np.ndarray:
    B = op.null_basis()
    if B.shape[1] == 0:
        raise DomainError("operator has a trivial null space")
    return B


def sample_null_spectra(op: MeasurementOperator, n_samples: int, seed: int):
    """Singular values of ``n_samples`` random unit-norm null-space elements.

    Coefficients are standard Gaussian over the orthonormal null-space basis,
    drawn in order from ``default_rng(seed)``.  Yields ``(offset, spectra)``
    chunks so large runs stay within memory.
    """
    if n_samples < 1:
        raise ContractViolation("n_samples must be at least 1")
    B = _check_null(op)
    rng = np.random.default_rng(seed)
    k = B.shape[1]
    for start in range(0, n_samples, _CHUNK):
        cnt = min(_CHUNK, n_samples - start)
        C = rng.standard_normal((cnt, k))
        C /= np.linalg.norm(C, axis=1, keepdims=True)
        mats = (C @ B.T).reshape(cnt, op.n2, op.n1).transpose(0, 2, 1)
        yield start, np.linalg.svd(mats, compute_uv=False)


def theta_profile(op: MeasurementOperator, surrogate: Surrogate, n_samples: int, seed: int,
                  ranks=None) -> dict[int, ThetaEstimate]:
    """``estimate_theta`` for several ranks on one shared set of samples."""
    nmin = min(op.n1, op.n2)
    ranks = list(range(nmin + 1)) if ranks is None else [int(r) for r in ranks]
    for r in ranks:
        if r < 0 or r > nmin:
            raise DomainError(f"r must lie in [0, {nmin}]")
    best = {r: (-1.0, 0) for r in ranks}
    for start, spectra in sample_null_spectra(op, n_samples, seed):
        vals = surrogate.values(spectra)
        for r in ranks:
            ratios = _head_ratio(vals, r)
            i = int(np.argmax(ratios))
            if ratios[i] > best[r][0]:
                best[r] = (float(ratios[i]), start + i)
    return {r: ThetaEstimate(r, n_samples, min(1.0, v), seed, i, surrogate.label())
            for r, (v, i) in best.items()}


def estimate_theta(op: MeasurementOperator, r: int, surrogate: Surrogate, n_samples: int,
                   seed: int) -> ThetaEstimate:
    """Sampled lower bound on the worst-case null-space concentration ratio."""
    return theta_profile(op, surrogate, n_samples, seed, ranks=[r])[r]


def estimate_spherical_constant(op: MeasurementOperator, n_samples: int,
                                seed: int) -> SphericalEstimate:
    """Sampled upper bound on ``min ||W||_*^2 / ||W||_F^2`` over the null space."""
    best, arg = math.inf, 0
    for start, spectra in sample_null_spectra(op, n_samples, seed):
        ratios = spectra.sum(axis=1) ** 2 / (spectra ** 2).sum(axis=1)
        i = int(np.argmin(ratios))
        if ratios[i] < best:
            best, arg = float(ratios[i]), start + i
    return SphericalEstimate(n_samples, best, seed, arg)


def spherical_ratio(W: np.ndarray) -> float:
    s = singular_values(W)
    if s[0] == 0.0:
        raise DomainError("ratio is undefined for W = 0")
    return float(s.sum() ** 2 / (s ** 2).sum())


def prop4_bound(delta_est: float, n: int, delta: float, fam: UAFamily | None = None) -> float:
    """Distance bound ``n alpha / (sqrt(D) - sqrt(ceil(D - 1)))`` between the
    smoothed and the minimum rank solutions, with ``alpha = |f_delta^{-1}(1 - 1/n)|``
    and ``D`` the spherical section constant."""
    fam = fam or UAFamily()
    if n < 2:
        raise DomainError("n must be at least 2")
    if not delta_est > 1.0:
        raise DomainError("spherical section constant must exceed 1")
    denom = math.sqrt(delta_est) - math.sqrt(math.ceil(delta_est - 1.0))
    if denom <= 0.0:
        raise DomainError(
            f"bound is undefined for D = {delta_est:g}: sqrt(D) <= sqrt(ceil(D - 1))")
    alpha = abs(float(ua_inverse(fam, delta, 1.0 - 1.0 / n)))
    return n * alpha / denom


@dataclass
class Counterexample:
    X: np.ndarray
    X_prime: np.ndarray
    cost_X: float
    cost_X_prime: float
    residual: float | None = None


def nsp_counterexample(W: np.ndarray, r: int, surrogate: Surrogate,
                       op: MeasurementOperator | None = None) -> Counterexample:
    """Split a null-space element into a rank-``r`` matrix and a cheaper twin.

    With ``W = U diag(s) V^T`` take ``X = -U diag(s_1..s_r, 0..) V^T`` and
    ``X' = U diag(0.., s_{r+1}..) V^T``; then ``X' - X = W`` so both have the
    same measurements, and ``X'`` costs no more than ``X`` whenever the top
    ``r`` singular values carry at least half of the surrogate.
    """
    W = np.asarray(W, dtype=float)
    s = svd(W)
    if r < 0 or r > s.sigma.size:
        raise DomainError(f"r must lie in [0, {s.sigma.size}]")
    vals = surrogate.values(s.sigma)
    head, tail = float(vals[:r].sum()), float(vals[r:].sum())
    if head < tail:
        raise ContractViolation(
            f"top {r} singular values carry {head:.6g} < {tail:.6g}; no counterexample from this W")
    top = np.where(np.arange(s.sigma.size) < r, s.sigma, 0.0)
    X = -(s.U * top) @ s.V.T
    Xp = (s.U * (s.sigma - top)) @ s.V.T
    res = None
    if op is not None:
        res = float(np.linalg.norm(op.apply(X) - op.apply(Xp)))
    return Counterexample(X, Xp, surrogate.total(X), surrogate.total(Xp), res)


@dataclass
class EmbedCheck:
    Y: np.ndarray
    Z: np.ndarray
    block_psd: bool
    rank_sum: int
    min_eig: float = 0.0


def embed_check(X: np.ndarray, tol: float = 1e-10) -> EmbedCheck:
    """Build ``Y = U S U^T``, ``Z = V S V^T`` and test ``[[Y, X], [X^T, Z]] >= 0``."""
    X = np.asarray(X, dtype=float)
    Y, Z = embed(X)
    M = np.block([[Y, X], [X.T, Z]])
    lam = evd_sym(0.5 * (M + M.T)).lam
    scale = max(float(np.trace(Y) + np.trace(Z)), 1.0)
    min_eig = float(lam[-1])
    return EmbedCheck(Y, Z, min_eig >= -tol * scale, matrix_rank(Y) + matrix_rank(Z), min_eig)


@dataclass
class SubadditivityResult:
    holds: bool
    margin: float
    lhs: float
    rhs: float


def check_subadditivity(A: np.ndarray, B: np.ndarray, fam: UAFamily, delta: float,
                        tol: float = 1e-9) -> SubadditivityResult:
    """Test ``sum f(s_i(A - B)) >= sum |f(s_i(A)) - f(s_i(B))|``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionMismatch("A and B must have the same shape")
    lhs = float(ua_eval(fam, delta, singular_values(A - B)).sum())
    fa = ua_eval(fam, delta, singular_values(A))
    fb = ua_eval(fam, delta, singular_values(B))
    rhs = float(np.abs(fa - fb).sum())
    margin = lhs - rhs
    return SubadditivityResult(margin >= -tol, margin, lhs, rhs)


@dataclass
class TraceBounds:
    lower: float
    trace: float
    upper: float
    details: dict = field(default_factory=dict)

    def holds(self, rtol: float = 1e-9) -> bool:
        slack = rtol * max(abs(self.lower), abs(self.upper), 1.0)
        return self.lower - slack <= self.trace <= self.upper + slack


def trace_bounds(A: np.ndarray, B: np.ndarray) -> TraceBounds:
    """Eigenvalue bounds on ``trace(AB)`` for symmetric ``A`` and ``B``:
    opposite ordering gives the lower bound, matched ordering the upper."""
    la = evd_sym(A).lam
    lb = evd_sym(B).lam
    if la.size != lb.size:
        raise DimensionMismatch("A and B must have the same order")
    return TraceBounds(float(la[::-1] @ lb), float(np.sum(A * B.T)), float(la @ lb))
