"""Symmetric eigensolvers: Householder tridiagonalization, implicit QL, Lanczos."""

from __future__ import annotations

import logging
import math

import numba
import numpy as np

from .errors import ConvergenceError, ShapeError

log = logging.getLogger(__name__)


def tridiagonalize(A):
    """Householder reduction ``A = Q T Q^T``.

    Returns the diagonal, the off-diagonal (length n-1) and ``Q``.
    """
    A = np.array(A, dtype=np.float64, copy=True)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ShapeError(f"expected a square matrix, got {A.shape}")
    Q = np.eye(n)
    for k in range(n - 2):
        x = A[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x.copy()
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        # two-sided reflector on the trailing block: A <- H A H, H = I - 2 v v^T
        sub = A[k + 1:, k:]
        sub -= 2.0 * np.outer(v, v @ sub)
        sub = A[k:, k + 1:]
        sub -= 2.0 * np.outer(sub @ v, v)
        Q[:, k + 1:] -= 2.0 * np.outer(Q[:, k + 1:] @ v, v)
    d = np.diag(A).copy()
    e = np.diag(A, -1).copy()
    return d, e, Q


@numba.njit(cache=True)
def _tql(d, e, z, want_vectors):
    # Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix.
    # d: diagonal (overwritten by eigenvalues), e: subdiagonal padded to length n.
    n = d.shape[0]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= 2.220446049250313e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 60:
                return False
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for k in range(z.shape[0]):
                        f = z[k, i + 1]
                        z[k, i + 1] = s * z[k, i] + c * f
                        z[k, i] = c * z[k, i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return True


def tridiagonal_eigh(d, e, vectors=None, want_vectors=True):
    """Eigenpairs of the symmetric tridiagonal matrix with diagonal ``d`` and off-diagonal ``e``.

    ``vectors`` (default identity) is right-multiplied by the rotations, so
    passing the Householder ``Q`` yields eigenvectors of the original matrix.
    Eigenvalues come back in descending order.
    """
    d = np.array(d, dtype=np.float64, copy=True)
    n = d.size
    ee = np.zeros(n)
    ee[: n - 1] = e
    if want_vectors:
        z = np.eye(n) if vectors is None else np.array(vectors, dtype=np.float64, copy=True)
    else:
        z = np.zeros((0, n))
    if n and not _tql(d, ee, z, want_vectors):
        raise ConvergenceError("implicit QL did not converge in 60 sweeps")
    order = np.argsort(-d, kind="stable")
    if want_vectors:
        return d[order], z[:, order]
    return d[order], None


def symmetric_eigh(A, method="lapack", want_vectors=False):
    """Full eigendecomposition of a dense symmetric matrix, descending.

    ``method="native"`` runs the Householder + implicit QL code above;
    ``"lapack"`` hands the same reduction to LAPACK via numpy.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got {A.shape}")
    if method == "native":
        d, e, Q = tridiagonalize(A)
        return tridiagonal_eigh(d, e, Q if want_vectors else None, want_vectors)
    if method != "lapack":
        raise ValueError(f"unknown eigensolver {method!r}")
    if want_vectors:
        w, V = np.linalg.eigh(A)
        return w[::-1].copy(), V[:, ::-1].copy()
    return np.linalg.eigvalsh(A)[::-1].copy(), None


def lanczos(matvec, n, k, tol=1e-8, max_iter=None, seed=0, want_vectors=False, max_restarts=3):
    """Top-``k`` eigenpairs of a symmetric operator by Lanczos with full reorthogonalization.

    Iterates until the top-``k`` Ritz values change by less than ``tol``
    (relative) between successive steps and their residual bounds
    ``|beta_m s_mi|`` fall below ``sqrt(tol)`` times the spectral scale.
    On breakdown before the space is exhausted the recurrence restarts from
    a fresh random vector orthogonal to the current basis; more than
    ``max_restarts`` such restarts raise :class:`ConvergenceError`.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, n)
    max_iter = n if max_iter is None else min(max_iter, n)
    rng = np.random.default_rng(seed)
    Q = np.zeros((n, max_iter + 1))
    alpha = np.zeros(max_iter)
    beta = np.zeros(max_iter)
    q = rng.standard_normal(n)
    Q[:, 0] = q / np.linalg.norm(q)
    restarts = 0
    prev = None
    scale = 0.0
    m = 0
    theta = None
    for j in range(max_iter):
        w = np.asarray(matvec(Q[:, j]), dtype=np.float64)
        alpha[j] = Q[:, j] @ w
        w = w - alpha[j] * Q[:, j]
        if j > 0:
            w -= beta[j - 1] * Q[:, j - 1]
        basis = Q[:, : j + 1]
        w -= basis @ (basis.T @ w)
        w -= basis @ (basis.T @ w)
        b = np.linalg.norm(w)
        m = j + 1
        scale = max(scale, abs(alpha[j]), b)
        theta, _ = tridiagonal_eigh(alpha[:m], beta[: m - 1], want_vectors=False)
        if m >= k:
            top = theta[:k]
            if prev is not None:
                change = np.max(np.abs(top - prev) / np.maximum(np.abs(top), 1e-300))
                if change < tol:
                    _, s = tridiagonal_eigh(alpha[:m], beta[: m - 1])
                    if np.all(np.abs(b * s[m - 1, :k]) <= math.sqrt(tol) * max(scale, 1e-300)):
                        break
            prev = top.copy()
        if m == n:
            break
        if b <= 1e-12 * max(scale, 1e-300):
            if m >= k:
                # invariant subspace holding the top-k Ritz pairs: exact
                break
            restarts += 1
            if restarts > max_restarts:
                raise ConvergenceError(f"Lanczos broke down {restarts} times at step {m}")
            log.debug("Lanczos breakdown at step %d, restarting", m)
            for _ in range(10):
                r = rng.standard_normal(n)
                r -= basis @ (basis.T @ r)
                r -= basis @ (basis.T @ r)
                if np.linalg.norm(r) > 1e-8:
                    break
            beta[j] = 0.0
            Q[:, j + 1] = r / np.linalg.norm(r)
            continue
        beta[j] = b
        Q[:, j + 1] = w / b
    else:
        log.info("Lanczos stopped at max_iter=%d before meeting tol", max_iter)
    values = theta[:k]
    vectors = None
    if want_vectors:
        _, s = tridiagonal_eigh(alpha[:m], beta[: m - 1])
        vectors = Q[:, :m] @ s[:, :k]
    return values, vectors, m
