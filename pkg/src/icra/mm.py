"""Majorize-minimize iteration for a fixed approximation scale.

Each step linearizes the concave surrogate ``F(Y) + F(Z)`` of the PSD
embedding ``[[Y, X], [X^T, Z]] >= 0`` at the current ``(Y, Z)``.  The
resulting linear program over the embedding is a weighted nuclear norm
problem in ``X`` with weights equal to the square roots of the gradients;
the optimal ``(Y, Z)`` for the new ``X`` is read off the SVD of the weighted
matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .linalg import evd_sym, svd
from .nnm import SpectralWeight, SplitSolverConfig, solve_weighted_nnm
from .operators import MeasurementOperator
from .ua import UAFamily, rank_surrogate

log = logging.getLogger(__name__)

ICRA_EXP = "icra"
LOGDET = "logdet"
# relative floor on gradient eigenvalues before taking square roots
GRAD_FLOOR = 1e-14
LOG_TINY = np.log(1e-250)
MONOTONE_TOL = 1e-6


@dataclass(frozen=True)
class ReweightRule:
    kind: str
    delta: float | None = None
    alpha: float | None = None
    fam: UAFamily = field(default_factory=UAFamily)

    def __post_init__(self):
        if self.kind == ICRA_EXP and not (self.delta and self.delta > 0):
            raise ContractViolation("ICRA reweighting needs delta > 0")
        if self.kind == LOGDET and not (self.alpha and self.alpha > 0):
            raise ContractViolation("log-det reweighting needs alpha > 0")
        if self.kind not in (ICRA_EXP, LOGDET):
            raise ContractViolation(f"unknown reweighting rule {self.kind!r}")

    @classmethod
    def icra(cls, delta: float, fam: UAFamily | None = None) -> "ReweightRule":
        return cls(ICRA_EXP, delta=float(delta), fam=fam or UAFamily())

    @classmethod
    def logdet(cls, alpha: float) -> "ReweightRule":
        return cls(LOGDET, alpha=float(alpha))

    def log_weights(self, lam: np.ndarray) -> np.ndarray:
        """Log of the squared weight spectrum for eigenvalues ``lam``."""
        lam = np.maximum(lam, 0.0)
        if self.kind == ICRA_EXP:
            return self.fam.log_df(lam / self.delta) - np.log(self.delta)
        return -np.log(lam + self.alpha)

    def objective(self, Y: np.ndarray, Z: np.ndarray) -> float:
        """The concave cost being majorized: F(Y) + F(Z), or the log-det pair."""
        ly = evd_sym(Y, psd=True).lam
        lz = evd_sym(Z, psd=True).lam
        if self.kind == ICRA_EXP:
            return rank_surrogate(self.fam, self.delta, ly) + rank_surrogate(self.fam, self.delta, lz)
        return float(np.sum(np.log(ly + self.alpha)) + np.sum(np.log(lz + self.alpha)))


@dataclass
class MmState:
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    surrogate_value: float = float("nan")
    inner_iter: int = 0


@dataclass
class MmResult:
    state: MmState
    trace: list
    d2: list
    subproblem_iters: list
    converged: bool
    subproblems_converged: bool = True


def reweight(rule: ReweightRule, Y: np.ndarray, Z: np.ndarray) -> tuple[SpectralWeight, SpectralWeight]:
    """Weights for the next weighted nuclear norm step.

    ICRA: ``W = grad F_delta(.)^(1/2)``; log-det: ``W = (. + alpha I)^(-1/2)``.
    """
    ey = evd_sym(Y, psd=True)
    ez = evd_sym(Z, psd=True)
    ly, lz = rule.log_weights(ey.lam), rule.log_weights(ez.lam)
    if rule.kind == ICRA_EXP:
        top = max(ly.max(), lz.max())
        floor = top + np.log(GRAD_FLOOR)
        ly, lz = np.maximum(ly, floor), np.maximum(lz, floor)
        # a common rescale leaves the minimizer and the (Y, Z) update unchanged
        if top < LOG_TINY:
            ly, lz = ly - top, lz - top
    return SpectralWeight(ey.Q, np.exp(0.5 * ly)), SpectralWeight(ez.Q, np.exp(0.5 * lz))


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def update_yz(X_next: np.ndarray, W_l, W_r) -> tuple[np.ndarray, np.ndarray]:
    """Optimal embedding blocks for ``X_next`` under the current weights.

    ``Y = W_l^-1 U S U^T W_l^-1`` and ``Z = W_r^-1 V S V^T W_r^-1`` with
    ``U S V^T`` the SVD of ``W_l X_next W_r``, computed in the weights'
    eigenbasis as Gram matrices.  Badly scaled weights leave a residual
    ``E = X_next - G H^T``; adding the canonical embedding of ``E`` keeps the
    block matrix positive semidefinite.
    """
    Wl = W_l if isinstance(W_l, SpectralWeight) else SpectralWeight.from_matrix(W_l)
    Wr = W_r if isinstance(W_r, SpectralWeight) else SpectralWeight.from_matrix(W_r)
    M = Wl.w[:, None] * (Wl.Q.T @ X_next @ Wr.Q) * Wr.w[None, :]
    s = svd(M)
    root = np.sqrt(s.sigma)
    G = Wl.Q @ ((s.U / Wl.w[:, None]) * root)
    H = Wr.Q @ ((s.V / Wr.w[:, None]) * root)
    Y, Z = G @ G.T, H @ H.T
    E = X_next - G @ H.T
    if np.any(E):
        Ey, Ez = embed(E)
        Y, Z = Y + Ey, Z + Ez
    return _sym(Y), _sym(Z)


def embed(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``Y = U S U^T``, ``Z = V S V^T`` from the SVD of ``X``."""
    s = svd(X)
    return _sym((s.U * s.sigma) @ s.U.T), _sym((s.V * s.sigma) @ s.V.T)


def initial_state(X: np.ndarray, rule: ReweightRule | None = None) -> MmState:
    Y, Z = embed(X)
    value = rule.objective(Y, Z) if rule is not None else float("nan")
    return MmState(np.array(X, dtype=float), Y, Z, value, 0)


def mm_solve_fixed_delta(op: MeasurementOperator, b, rule: ReweightRule, init: MmState,
                         eps2: float = 1e-2, max_inner: int = 30,
                         cfg: SplitSolverConfig | None = None) -> MmResult:
    """Run reweighted nuclear norm steps until the relative change drops below ``eps2``."""
    if eps2 <= 0:
        raise ContractViolation("eps2 must be positive")
    b = np.asarray(b, dtype=float).reshape(-1)
    state = init
    if not np.isfinite(state.surrogate_value):
        state.surrogate_value = rule.objective(state.Y, state.Z)
    trace = [state.surrogate_value]
    d2s, sub_iters = [], []
    converged = False
    sub_ok = True
    for j in range(1, max_inner + 1):
        Wl, Wr = reweight(rule, state.Y, state.Z)
        sol = solve_weighted_nnm(op, b, Wl, Wr, cfg, x_init=state.X)
        sub_iters.append(sol.iters)
        sub_ok = sub_ok and sol.converged
        X_next = sol.X_hat
        Y, Z = update_yz(X_next, Wl, Wr)
        value = rule.objective(Y, Z)
        if value > trace[-1] + MONOTONE_TOL:
            log.debug("surrogate increased by %.3g at inner step %d", value - trace[-1], j)
        trace.append(value)
        nrm = np.linalg.norm(state.X)
        d2 = float(np.linalg.norm(X_next - state.X) / nrm) if nrm > 0 else float(np.linalg.norm(X_next) > 0)
        d2s.append(d2)
        state = MmState(X_next, Y, Z, value, j)
        if d2 <= eps2:
            converged = True
            break
    return MmResult(state, trace, d2s, sub_iters, converged, sub_ok)
