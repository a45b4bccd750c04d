"""Nuclear norm minimization under affine equality constraints.

Both the plain problem ``min ||X||_* s.t. A(X) = b`` and the weighted
problem ``min ||W_l X W_r||_* s.t. A(X) = b`` are solved by Douglas-Rachford
splitting (ADMM with a scaled dual) between singular value thresholding and
projection onto the affine feasible set.  The weighted problem is reduced to
the plain one through ``Z = W_l X W_r``, written in the eigenbasis of the
weights.  Candidates are carried as null-space coefficients of the original
constraints, so the returned ``X`` is feasible however badly the weights are
scaled and the weights are never inverted.

The fixed-point iteration is accelerated with safeguarded Anderson mixing,
and the penalty is adapted by residual balancing during a burn-in phase.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, IllConditionedWeights
from .linalg import EvdResult, evd_sym, singular_values, thin_svd, unvec, vec
from .operators import MeasurementOperator

log = logging.getLogger(__name__)

MAX_WEIGHT_COND = 1e12
NULL_RCOND = 1e-12


@dataclass
class SplitSolverConfig:
    penalty: float = 1.0
    max_iters: int = 20000
    primal_tol: float = 1e-9
    dual_tol: float = 1e-9
    # residual balancing: rescale the penalty by 2 when residuals differ by > 10x
    adapt_every: int = 10
    adapt_until: int = 1000
    anderson_memory: int = 10

    def __post_init__(self):
        if not (self.penalty > 0 and self.primal_tol > 0 and self.dual_tol > 0):
            raise ContractViolation("penalty and tolerances must be positive")
        if self.max_iters < 1:
            raise ContractViolation("max_iters must be at least 1")


@dataclass
class NnmSolution:
    X_hat: np.ndarray
    iters: int
    primal_res: float
    dual_res: float
    objective: float
    converged: bool
    feasibility: float
    objective_trace: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class SpectralWeight:
    """Symmetric positive definite weight ``Q diag(w) Q^T`` kept in factored form."""

    Q: np.ndarray
    w: np.ndarray
    is_identity: bool = False

    @classmethod
    def identity(cls, n: int) -> "SpectralWeight":
        return cls(np.eye(n), np.ones(n), True)

    @classmethod
    def from_matrix(cls, W: np.ndarray) -> "SpectralWeight":
        e = evd_sym(W)
        if e.lam[-1] <= 0:
            raise ContractViolation("weight matrix is not positive definite")
        return cls(e.Q, e.lam)

    @classmethod
    def from_evd(cls, evd: EvdResult) -> "SpectralWeight":
        return cls(evd.Q, evd.lam)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def cond(self) -> float:
        return float(self.w.max() / self.w.min())

    @property
    def matrix(self) -> np.ndarray:
        if self.is_identity:
            return np.eye(self.n)
        return (self.Q * self.w) @ self.Q.T

    @property
    def inverse(self) -> np.ndarray:
        if self.is_identity:
            return np.eye(self.n)
        return (self.Q / self.w) @ self.Q.T

    def scaled(self, kappa: float) -> "SpectralWeight":
        return SpectralWeight(self.Q, self.w * kappa, self.is_identity and kappa == 1.0)


def as_weight(W, n: int) -> SpectralWeight:
    if W is None:
        return SpectralWeight.identity(n)
    if isinstance(W, SpectralWeight):
        return W
    W = np.asarray(W, dtype=float)
    if W.shape != (n, n):
        raise ContractViolation(f"weight must be {n}x{n}, got {W.shape}")
    return SpectralWeight.from_matrix(W)


def svt_prox(M: np.ndarray, tau: float) -> np.ndarray:
    """Proximal map of ``tau * ||.||_*``: soft-threshold the singular values."""
    if tau < 0:
        raise ContractViolation("threshold must be nonnegative")
    U, s, Vt = thin_svd(M)
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    return (U[:, :k] * s[:k]) @ Vt[:k]


def _shrink(M: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
    U, s, Vt = thin_svd(M)
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    return (U[:, :k] * s[:k]) @ Vt[:k], float(s.sum())


@dataclass
class _AffineSet:
    """``{z : z - z0 in range(B)}`` (null form) or ``{z : B^T (z - z0) = 0}`` (row form)."""

    z0: np.ndarray
    B: np.ndarray
    null_form: bool

    def project(self, v: np.ndarray) -> np.ndarray:
        d = v - self.z0
        if self.null_form:
            return self.z0 + self.B @ (self.B.T @ d)
        return v - self.B @ (self.B.T @ d)


def _nuclear_min(shape: tuple[int, int], aff: _AffineSet, start: np.ndarray,
                 cfg: SplitSolverConfig, track_objective: bool = False):
    """Minimize ``||Z||_*`` over an affine set.  Vectors are in vec coordinates."""
    n1, n2 = shape
    rho = cfg.penalty
    y = aff.project(start)
    p = y
    mem = cfg.anderson_memory
    ys: deque = deque(maxlen=mem + 1)
    gs: deque = deque(maxlen=mem + 1)
    fallback = None
    r_pri = r_dual = np.inf
    converged = False
    trace = []
    k = 0
    for k in range(1, cfg.max_iters + 1):
        u = y - p
        Z, _ = _shrink(unvec(p - u, n1, n2), 1.0 / rho)
        z = vec(Z)
        y_new = z + u
        p_new = aff.project(y_new)
        u_new = y_new - p_new
        r_pri = float(np.linalg.norm(z - p_new))
        r_dual = rho * float(np.linalg.norm(p_new - p))
        if track_objective:
            trace.append(float(singular_values(unvec(p_new, n1, n2)).sum()))
        scale_p = max(np.linalg.norm(z), np.linalg.norm(p_new), 1e-300)
        scale_d = max(rho * np.linalg.norm(u_new), 1e-300)
        r_pri, r_dual = r_pri / scale_p, r_dual / scale_d
        if r_pri <= cfg.primal_tol and r_dual <= cfg.dual_tol:
            p = p_new
            converged = True
            break
        g = y_new - y
        gn = float(np.linalg.norm(g))
        if fallback is not None and gn > fallback[1]:
            # the extrapolated point did worse than a plain step would have
            y = fallback[0]
            p = aff.project(y)
            ys.clear()
            gs.clear()
            fallback = None
            continue
        fallback = None
        if cfg.adapt_every and k <= cfg.adapt_until and k % cfg.adapt_every == 0:
            ratio = r_pri / max(r_dual, 1e-300)
            new_rho = rho * 2.0 if ratio > 10.0 else rho / 2.0 if ratio < 0.1 else rho
            if new_rho != rho:
                y = p_new + u_new * (rho / new_rho)
                p = p_new
                rho = new_rho
                ys.clear()
                gs.clear()
                continue
        if mem > 0:
            ys.append(y)
            gs.append(g)
        if len(ys) >= 2:
            Y = np.array(ys)
            G = np.array(gs)
            dY = np.diff(Y, axis=0).T
            dG = np.diff(G, axis=0).T
            coef, *_ = np.linalg.lstsq(dG, g, rcond=None)
            fallback = (y_new, gn)
            y = y_new - (dY + dG) @ coef
            p = aff.project(y)
        else:
            y = y_new
            p = p_new
    return p, k, r_pri, r_dual, converged, trace


def _plain_set(op: MeasurementOperator, x_feas: np.ndarray) -> _AffineSet:
    use_null = (op.nn - op.m) <= op.m
    B = op.null_basis() if use_null else op.row_basis()
    return _AffineSet(vec(x_feas), B, use_null)


def _scaled_set(op: MeasurementOperator, x_feas: np.ndarray, Wl: SpectralWeight,
                Wr: SpectralWeight) -> tuple[_AffineSet, np.ndarray, np.ndarray]:
    """Feasible set in ``Z = Dl (Ql^T X Qr) Dr``, the weights' eigenbasis.

    ``X`` stays parametrized by null-space coefficients, so every candidate
    maps back to an exactly feasible matrix without inverting the weights.
    Directions whose image is below ``NULL_RCOND`` of the largest are left
    at ``x_feas``: the weighted objective cannot see them.
    """
    n1, n2 = op.n1, op.n2
    N = op.null_basis()
    k = N.shape[1]
    mats = N.T.reshape(k, n2, n1).transpose(0, 2, 1)
    gain = np.outer(Wl.w, Wr.w)
    T = ((Wl.Q.T @ mats @ Wr.Q) * gain).transpose(0, 2, 1).reshape(k, op.nn).T
    U, S, Vt = thin_svd(T)
    keep = S > NULL_RCOND * S[0]
    z0 = vec(gain * (Wl.Q.T @ x_feas @ Wr.Q))
    return _AffineSet(z0, U[:, keep], True), N, Vt[keep].T / S[keep]


def solve_weighted_nnm(op: MeasurementOperator, b, W_l=None, W_r=None,
                       cfg: SplitSolverConfig | None = None, x_init=None,
                       track_objective: bool = False) -> NnmSolution:
    """Solve ``min ||W_l X W_r||_* s.t. A(X) = b`` for positive definite weights.

    Scaling both weights by a positive constant does not change the minimizer,
    so they are normalized to unit spectral norm internally.
    """
    cfg = cfg or SplitSolverConfig()
    b = np.asarray(b, dtype=float).reshape(-1)
    Wl = as_weight(W_l, op.n1)
    Wr = as_weight(W_r, op.n2)
    for W in (Wl, Wr):
        if W.w.min() <= 0:
            raise ContractViolation("weights must be positive definite")
        if W.cond > MAX_WEIGHT_COND:
            raise IllConditionedWeights(
                f"weight condition number {W.cond:.3g} exceeds {MAX_WEIGHT_COND:g}; "
                "use a larger floor on delta")
    Wl0, Wr0 = Wl, Wr
    kappa = 1.0
    if not Wl.is_identity:
        kappa *= Wl.w.max()
        Wl = Wl.scaled(1.0 / Wl.w.max())
    if not Wr.is_identity:
        kappa *= Wr.w.max()
        Wr = Wr.scaled(1.0 / Wr.w.max())

    x_feas = op.affine_project(b, x_init) if x_init is not None else op.min_norm_solution(b)

    def finish(X, iters, rp, rd, conv, trace):
        X = op.affine_project(b, X)
        if Wl0.is_identity and Wr0.is_identity:
            obj = float(singular_values(X).sum())
        else:
            obj = float(singular_values(Wl0.matrix @ X @ Wr0.matrix).sum())
        feas = float(np.linalg.norm(op.apply(X) - b))
        return NnmSolution(X, iters, rp, rd, obj, conv, feas, [t * kappa for t in trace])

    if op.m == op.nn:
        return finish(x_feas, 0, 0.0, 0.0, True, [])
    if op.m == 0 or not np.any(b):
        return finish(np.zeros((op.n1, op.n2)), 0, 0.0, 0.0, True, [])

    weighted = not (Wl.is_identity and Wr.is_identity)
    if weighted:
        aff, N, coef = _scaled_set(op, x_feas, Wl, Wr)
    else:
        aff = _plain_set(op, x_feas)
    if aff.B.shape[1] == 0:
        return finish(x_feas, 0, 0.0, 0.0, True, [])
    scale = float(np.linalg.norm(aff.project(np.zeros_like(aff.z0)))) or 1.0
    unit = _AffineSet(aff.z0 / scale, aff.B, aff.null_form)
    p, iters, rp, rd, conv, trace = _nuclear_min((op.n1, op.n2), unit, unit.z0, cfg, track_objective)
    if weighted:
        X = x_feas + unvec(N @ (coef @ (aff.B.T @ (p * scale - aff.z0))), op.n1, op.n2)
    else:
        X = unvec(p * scale, op.n1, op.n2)
    if not conv:
        log.debug("splitting solver stopped at max_iters=%d (primal %.2e, dual %.2e)",
                  cfg.max_iters, rp, rd)
    sol = finish(X, iters, rp, rd, conv, [t * scale for t in trace])
    if x_init is not None:
        start = finish(x_feas, iters, rp, rd, conv, sol.objective_trace)
        if start.objective < sol.objective:
            # never hand back a point worse than the feasible start
            return start
    return sol


def solve_nnm(op: MeasurementOperator, b, cfg: SplitSolverConfig | None = None,
              x_init=None, track_objective: bool = False) -> NnmSolution:
    """Minimum nuclear norm matrix consistent with ``A(X) = b``."""
    return solve_weighted_nnm(op, b, None, None, cfg, x_init, track_objective)
