import numpy as np
import pytest
from hypothesis import given, strategies as st

from basinprobe.eigen import lanczos, symmetric_eigh, tridiagonal_eigh, tridiagonalize
from basinprobe.hessian import top_k_eigs


def _sym(rng, n):
    A = rng.standard_normal((n, n))
    return (A + A.T) / 2


def test_diag_top2():
    vals, _, _ = top_k_eigs(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_array_equal(vals, [3.0, 2.0])


@given(seed=st.integers(0, 10_000), n=st.integers(1, 30))
def test_tridiagonalization_preserves_matrix(seed, n):
    A = _sym(np.random.default_rng(seed), n)
    d, e, Q = tridiagonalize(A)
    T = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    np.testing.assert_allclose(Q @ T @ Q.T, A, atol=1e-12 * max(1, np.abs(A).max()))
    np.testing.assert_allclose(Q.T @ Q, np.eye(n), atol=1e-12)


def test_native_matches_lapack(rng):
    A = _sym(rng, 60)
    w1, V1 = symmetric_eigh(A, "native", want_vectors=True)
    w2, _ = symmetric_eigh(A, "lapack")
    np.testing.assert_allclose(w1, w2, atol=1e-12 * np.abs(w2).max())
    np.testing.assert_allclose(A @ V1, V1 * w1, atol=1e-10)
    assert np.all(np.diff(w1) <= 0)


def test_known_spectrum_recovered(rng):
    lam = np.linspace(10, -3, 40)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    A = Q @ np.diag(lam) @ Q.T
    np.testing.assert_allclose(symmetric_eigh(A, "native")[0], lam, atol=1e-11)
    vals, _, _ = lanczos(lambda v: A @ v, 40, 5)
    np.testing.assert_allclose(vals, lam[:5], rtol=1e-9)


def test_tridiagonal_direct(rng):
    d, e = rng.standard_normal(12), rng.standard_normal(11)
    T = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    w, _ = tridiagonal_eigh(d, e, want_vectors=False)
    np.testing.assert_allclose(w, np.sort(np.linalg.eigvalsh(T))[::-1], atol=1e-12)


def test_lanczos_top10_matches_dense():
    rng = np.random.default_rng(0)
    for _ in range(3):
        A = _sym(rng, 200)
        ref = np.sort(np.linalg.eigvalsh(A))[::-1][:10]
        vals, vecs, _ = lanczos(lambda v: A @ v, 200, 10, want_vectors=True)
        np.testing.assert_allclose(vals, ref, rtol=1e-6)
        np.testing.assert_allclose(A @ vecs, vecs * vals, atol=1e-3)


def test_eigen_sum_is_trace(rng):
    A = _sym(rng, 50)
    assert abs(symmetric_eigh(A, "native")[0].sum() - np.trace(A)) <= 1e-6 * np.abs(A).sum()


def test_lanczos_exact_subspace_terminates():
    # rank-2 operator: the Krylov space is exhausted after two steps
    A = np.diag([5.0, 2.0] + [0.0] * 8)
    vals, _, m = lanczos(lambda v: A @ v, 10, 2)
    np.testing.assert_allclose(vals, [5.0, 2.0], rtol=1e-12)
    assert m <= 10


def test_lanczos_bad_k():
    with pytest.raises(ValueError):
        lanczos(lambda v: v, 5, 0)


def test_lanczos_repeated_breakdown_raises():
    from basinprobe.errors import ConvergenceError

    # every Krylov step of the identity breaks down; the fourth restart gives up
    with pytest.raises(ConvergenceError):
        lanczos(lambda v: v, 6, 6)
