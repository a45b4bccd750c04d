"""Unit-step approximating functions and the rank surrogate built on them.

A UA function ``f`` is concave, vanishes only at zero, is nondecreasing on
``[0, inf)`` and tends to one at infinity.  ``f_delta(x) = f(x / delta)``
sharpens toward the unit step as ``delta`` shrinks, and the matrix surrogate
``F_delta(X) = sum_i f_delta(sigma_i(X))`` tends to ``rank(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .linalg import EvdResult, evd_sym, singular_values, sym_matrix_function

EXPONENTIAL = "exponential"
RATIONAL = "rational"


@dataclass(frozen=True)
class UAFamily:
    """``exponential``: f(x) = 1 - exp(-x); ``rational``: f(x) = x / (x + 1) on x >= x0."""

    kind: str = EXPONENTIAL
    x0: float = -0.5

    def __post_init__(self):
        if self.kind not in (EXPONENTIAL, RATIONAL):
            raise DomainError(f"unknown UA family {self.kind!r}")
        if self.kind == RATIONAL and not -1.0 < self.x0 < 0.0:
            raise DomainError("rational family requires -1 < x0 < 0")

    @classmethod
    def from_name(cls, name: str, x0: float = -0.5) -> "UAFamily":
        name = name.lower()
        if name in ("exp", "exponential"):
            return cls(EXPONENTIAL)
        if name in ("rat", "rational"):
            return cls(RATIONAL, x0)
        raise DomainError(f"unknown UA family {name!r}")

    @property
    def gamma(self) -> float:
        """Slope at the origin, f'(0)."""
        return 1.0

    @property
    def lower(self) -> float:
        return 0.0 if self.kind == EXPONENTIAL else self.x0

    def f(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == EXPONENTIAL:
            return -np.expm1(-x)
        return x / (x + 1.0)

    def df(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == EXPONENTIAL:
            return np.exp(-x)
        return 1.0 / (x + 1.0) ** 2

    def log_df(self, x):
        """``log f'(x)``, finite where ``f'`` itself underflows."""
        x = np.asarray(x, dtype=float)
        if self.kind == EXPONENTIAL:
            return -x
        return -2.0 * np.log1p(x)

    def finv(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == EXPONENTIAL:
            return -np.log1p(-y)
        return y / (1.0 - y)


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    return delta


def ua_eval(fam: UAFamily, delta: float, x):
    delta = _check_delta(delta)
    x = np.asarray(x, dtype=float)
    if np.any(x < fam.lower * delta) or np.any(np.isnan(x)):
        raise DomainError("argument outside the domain of the UA function")
    return fam.f(x / delta)


def ua_derivative(fam: UAFamily, delta: float, x):
    """d/dx f(x / delta)."""
    delta = _check_delta(delta)
    x = np.asarray(x, dtype=float)
    if np.any(x < fam.lower * delta):
        raise DomainError("argument outside the domain of the UA function")
    return fam.df(x / delta) / delta


def ua_inverse(fam: UAFamily, delta: float, y):
    delta = _check_delta(delta)
    y = np.asarray(y, dtype=float)
    if np.any(y >= 1.0) or np.any(y < 0.0):
        raise DomainError("inverse is only defined on [0, 1)")
    return delta * fam.finv(y)


def rank_surrogate(fam: UAFamily, delta: float, sigma) -> float:
    """Sum of ``f_delta`` over a nonnegative spectrum."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0.0):
        raise DomainError("spectrum entries must be nonnegative")
    return float(np.sum(ua_eval(fam, delta, sigma)))


def matrix_surrogate(fam: UAFamily, delta: float, X: np.ndarray) -> float:
    """F_delta of a general matrix through its singular values (reporting only)."""
    return rank_surrogate(fam, delta, singular_values(X))


def psd_surrogate(fam: UAFamily, delta: float, Y: np.ndarray,
                  evd: EvdResult | None = None) -> float:
    if evd is None:
        evd = evd_sym(Y, psd=True)
    return rank_surrogate(fam, delta, evd.lam)


def _psd_evd(Y: np.ndarray) -> EvdResult:
    raw = evd_sym(Y)
    scale = max(abs(raw.lam[0]), abs(raw.lam[-1]), 1e-300)
    if raw.lam[-1] < -1e-10 * scale:
        raise DomainError("matrix is not positive semidefinite")
    return EvdResult(raw.Q, np.maximum(raw.lam, 0.0))


def grad_F_psd(fam: UAFamily, delta: float, Y: np.ndarray,
               evd: EvdResult | None = None) -> np.ndarray:
    """Gradient of ``Y -> sum_i f_delta(lambda_i(Y))`` on the PSD cone."""
    delta = _check_delta(delta)
    if evd is None:
        evd = _psd_evd(Y)
    return sym_matrix_function(Y, lambda lam: fam.df(lam / delta) / delta, evd)


@dataclass
class PropertyReport:
    """Grid check of the UA requirements; clause (a), analyticity, is not tested."""

    concave: bool
    zero_only_at_origin: bool
    nondecreasing: bool
    limit_one: bool
    growth: bool
    details: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return self.concave and self.zero_only_at_origin and self.nondecreasing and self.limit_one


def verify_property1(f: UAFamily | Callable, grid=None, h: float = 1e-3,
                     far: float = 1e8, limit_tol: float = 1e-6) -> PropertyReport:
    """Check concavity, zero set, monotonicity, limit and growth on a grid.

    ``f`` is a family (checked at delta = 1) or any vectorized callable.
    Second differences that sit below round-off of ``f`` are not counted
    against strictness.
    """
    fn = f.f if isinstance(f, UAFamily) else f
    grid = np.linspace(0.0, 100.0, 1001) if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 100:
        raise DomainError("verification grid needs at least 100 points")
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(grid), dtype=float)
        inner = grid[grid >= h]
        fm, f0, fp = fn(inner - h), fn(inner), fn(inner + h)
        d2 = np.asarray(fp - 2.0 * f0 + fm, dtype=float)
        roundoff = 8.0 * np.finfo(float).eps * np.maximum(np.abs(f0), 1.0)
        resolvable = np.abs(np.asarray(fp - f0, dtype=float)) > 1e3 * roundoff
        concave = bool(np.all(np.isfinite(d2)) and np.all(d2 <= roundoff)
                       and np.all(d2[resolvable] < 0.0))

        at_zero = float(np.asarray(fn(np.array([0.0])))[0])
        positive = vals[grid > 0]
        zero_ok = bool(np.isfinite(at_zero) and abs(at_zero) <= 1e-15 and np.all(positive != 0.0))

        steps = np.diff(vals)
        tol = 8.0 * np.finfo(float).eps * np.maximum(np.abs(vals[1:]), 1.0)
        nondecreasing = bool(np.all(np.isfinite(steps)) and np.all(steps >= -tol))

        limit = float(np.asarray(fn(np.array([far])))[0])
        limit_ok = bool(np.isfinite(limit) and abs(limit - 1.0) <= limit_tol)

        pos = grid[grid > 0]
        ratio = np.asarray(fn(pos), dtype=float) / pos
        growth = bool(np.all(np.diff(ratio) <= 1e-12))
    return PropertyReport(concave, zero_ok, nondecreasing, limit_ok, growth,
                          {"f0": at_zero, "f_far": limit, "max_second_diff": float(np.nanmax(d2))})
