import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_orthogonal, random_psd
from icra.errors import ContractViolation, DecompositionError, EvaluationError
from icra.linalg import (evd_sym, matrix_rank, nuclear_norm, singular_values, svd,
                         sym_matrix_function, unvec, vec)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_svd_diagonal():
    s = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(s.sigma, [3.0, 1.0])
    np.testing.assert_allclose(s.U, np.eye(2))
    np.testing.assert_allclose(s.V, np.eye(2))


def test_svd_zero():
    np.testing.assert_array_equal(svd(np.zeros((2, 2))).sigma, [0.0, 0.0])


def test_svd_antidiagonal_against_characteristic_polynomial():
    M = np.array([[0.0, 2.0], [1.0, 0.0]])
    # M^T M = diag(1, 4): roots of (x - 1)(x - 4)
    np.testing.assert_allclose(svd(M).sigma, [2.0, 1.0], atol=1e-15)


def test_svd_rejects_nonfinite():
    with pytest.raises(ContractViolation):
        svd(np.array([[np.nan, 0.0], [0.0, 1.0]]))


@pytest.mark.parametrize("shape", [(2, 2), (5, 5), (10, 10), (30, 30), (7, 3), (3, 9)])
def test_svd_invariants(rng, shape):
    for _ in range(100):
        M = rng.standard_normal(shape)
        s = svd(M)
        scale = s.sigma[0]
        assert np.linalg.norm(s.reconstruct() - M) <= 1e-10 * scale * np.sqrt(M.size)
        k = s.sigma.size
        np.testing.assert_allclose(s.U.T @ s.U, np.eye(k), atol=1e-10)
        np.testing.assert_allclose(s.V.T @ s.V, np.eye(k), atol=1e-10)
        assert np.all(np.diff(s.sigma) <= 0)
        first = [col[np.flatnonzero(np.abs(col) > 1e-14)[0]] for col in s.U.T]
        assert all(f > 0 for f in first)


def test_svd_deterministic_signs(rng):
    M = rng.standard_normal((6, 4))
    a, b = svd(M), svd(M.copy())
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.V, b.V)


def test_evd_identity_and_diagonal():
    np.testing.assert_allclose(evd_sym(np.eye(4)).lam, np.ones(4))
    np.testing.assert_allclose(evd_sym(np.diag([0.0, 4.0])).lam, [4.0, 0.0])


def test_evd_roundtrip_known_spectrum():
    Q0 = random_orthogonal(np.random.default_rng(7), 3)
    S = Q0 @ np.diag([2.0, 1.0, 0.5]) @ Q0.T
    np.testing.assert_allclose(evd_sym(S).lam, [2.0, 1.0, 0.5], atol=1e-14)


def test_evd_rejects_asymmetric():
    with pytest.raises(ContractViolation):
        evd_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))


@pytest.mark.parametrize("n", [2, 5, 10, 30])
def test_evd_invariants(rng, n):
    for _ in range(100):
        S = rng.standard_normal((n, n))
        S = S + S.T
        e = evd_sym(S)
        assert np.linalg.norm(e.reconstruct() - S) <= 1e-10 * np.linalg.norm(S)
        np.testing.assert_allclose(e.Q.T @ e.Q, np.eye(n), atol=1e-10)
        assert np.all(np.diff(e.lam) <= 0)


def test_evd_psd_clamps_roundoff(rng):
    S = random_psd(rng, 6, rank=2)
    e = evd_sym(S, psd=True)
    assert np.all(e.lam >= 0.0)
    assert np.sum(e.lam > 1e-12 * e.lam[0]) == 2


def test_sym_function_identity_and_diagonal(rng):
    S = random_psd(rng, 5)
    np.testing.assert_allclose(sym_matrix_function(S, lambda x: x), S, atol=1e-12)
    lam = np.array([3.0, 1.0, 0.0])
    np.testing.assert_allclose(sym_matrix_function(np.diag(lam), lambda x: np.exp(-x)),
                               np.diag(np.exp(-lam)), atol=1e-15)


def test_sym_function_square_matches_product(rng):
    S = random_psd(rng, 5)
    np.testing.assert_allclose(sym_matrix_function(S, lambda x: x ** 2), S @ S, atol=1e-9)


def test_sym_function_eigenvalues_and_commutation(rng):
    for _ in range(50):
        S = random_psd(rng, 6)
        F = sym_matrix_function(S, lambda x: 1.0 - np.exp(-x))
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(F)),
                                   np.sort(1.0 - np.exp(-np.linalg.eigvalsh(S))), atol=1e-9)
        assert np.linalg.norm(S @ F - F @ S) <= 1e-8 * np.linalg.norm(S) * np.linalg.norm(F)


def test_sym_function_nonfinite_raises():
    with pytest.raises(EvaluationError), np.errstate(divide="ignore"):
        sym_matrix_function(np.diag([1.0, 0.0]), lambda x: 1.0 / x)


@given(arrays(float, (4, 3), elements=finite))
def test_vec_roundtrip(M):
    np.testing.assert_array_equal(unvec(vec(M), 4, 3), M)
    np.testing.assert_array_equal(vec(M)[:4], M[:, 0])


@given(arrays(float, (3, 5), elements=finite))
def test_norm_inequalities(M):
    s = singular_values(M)
    fro = np.linalg.norm(M)
    assert nuclear_norm(M) >= fro - 1e-9 * max(fro, 1.0)
    assert nuclear_norm(M) <= np.sqrt(3) * fro + 1e-9 * max(fro, 1.0)
    assert matrix_rank(M) <= 3
    assert np.all(s >= 0)


def test_rank_threshold():
    assert matrix_rank(np.diag([1.0, 1e-13])) == 1
    assert matrix_rank(np.diag([1.0, 1e-11])) == 2
    assert matrix_rank(np.zeros((3, 3))) == 0


def test_svd_falls_back_when_gesdd_fails(rng, monkeypatch):
    M = rng.standard_normal((6, 4))
    want = np.linalg.svd(M, compute_uv=False)

    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("SVD did not converge")

    monkeypatch.setattr(np.linalg, "svd", broken)
    res = svd(M)
    assert np.allclose(res.sigma, want)
    assert np.allclose((res.U * res.sigma) @ res.V.T, M)
    assert np.allclose(singular_values(M), want)


def test_svd_raises_when_both_drivers_fail(monkeypatch):
    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("SVD did not converge")

    monkeypatch.setattr(np.linalg, "svd", broken)
    monkeypatch.setattr("scipy.linalg.svd", broken)
    with pytest.raises(DecompositionError):
        svd(np.eye(3))
