"""Linear-in-parameters baselines: kernel ridge regression and indistinguishable minima."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .data import LabeledDataset
from .errors import InvalidSpecError, SolverError


class FeatureKind(str, enum.Enum):
    POLYNOMIAL = "polynomial"
    RBF = "rbf"


@dataclass(frozen=True)
class Kernel:
    """``(1 + x.y)^degree`` or ``exp(-||x - y||^2 / (2 bandwidth^2))``."""

    kind: FeatureKind = FeatureKind.POLYNOMIAL
    degree: int = 3
    bandwidth: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))

    def __call__(self, X, Y):
        X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        Y = np.asarray(Y, dtype=np.float64).reshape(len(Y), -1)
        if self.kind is FeatureKind.POLYNOMIAL:
            return (1.0 + X @ Y.T) ** self.degree
        sq = np.sum(X**2, 1)[:, None] + np.sum(Y**2, 1)[None, :] - 2.0 * X @ Y.T
        return np.exp(-np.maximum(sq, 0.0) / (2.0 * self.bandwidth**2))

    def features(self, x):
        """Explicit map for the scalar polynomial kernel: ``sqrt(C(deg, j)) x^j``."""
        if self.kind is not FeatureKind.POLYNOMIAL:
            raise InvalidSpecError("explicit features exist only for the polynomial kernel")
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        j = np.arange(self.degree + 1)
        scale = np.sqrt([math.comb(self.degree, int(i)) for i in j])
        return scale * x[:, None] ** j


@dataclass
class FeatureModel:
    kernel: Kernel
    ridge_lambda: float
    train_x: np.ndarray = field(repr=False)
    dual_coef: np.ndarray = field(repr=False)
    train_residuals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def theta(self):
        """Primal coefficients ``Phi^T alpha`` (polynomial kernel on scalar inputs)."""
        return self.kernel.features(self.train_x).T @ self.dual_coef

    def predict(self, X):
        return self.kernel(X, self.train_x) @ self.dual_coef


def fit_krr(train_ds: LabeledDataset, kernel: Kernel, lam: float) -> FeatureModel:
    """Solve ``(K + lam I) alpha = y`` by Cholesky."""
    if lam < 0:
        raise InvalidSpecError("lambda must be nonnegative")
    X = train_ds.inputs
    y = np.asarray(train_ds.labels, dtype=np.float64).reshape(-1)
    G = kernel(X, X) + lam * np.eye(len(y))
    try:
        factor = linalg.cho_factor(G, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SolverError(
            f"kernel system is singular at lambda={lam}; use lambda > 0"
        ) from exc
    if np.linalg.cond(G) > 1e15:
        raise SolverError(f"kernel system is numerically singular at lambda={lam}; use lambda > 0")
    alpha = linalg.cho_solve(factor, y)
    model = FeatureModel(kernel, lam, X.copy(), alpha)
    model.train_residuals = model.predict(X) - y
    return model


def fit_curve(model, lo=-1.5, hi=3.5, num=501):
    """Prediction on a dense grid, as ``(x, y)`` columns."""
    x = np.linspace(lo, hi, num)
    return np.column_stack([x, model.predict(x.reshape(-1, 1))])


def lsq_gradient(Phi, y, theta):
    n = Phi.shape[0]
    return (2.0 / n) * Phi.T @ (Phi @ theta - y)


def squared_error_curvature(yhat, y):
    return np.full(np.shape(yhat), 2.0)


def lsq_hessian(Phi, y, theta):
    """``(1/N) sum l''(yhat_i, y_i) phi_i phi_i^T`` evaluated at ``theta``."""
    n = Phi.shape[0]
    curvature = squared_error_curvature(Phi @ theta, y)
    return (Phi * curvature[:, None]).T @ Phi / n


@dataclass
class ConstancyReport:
    num_minima: int
    feature_dim: int
    num_samples: int
    max_grad_norm: float
    hessians_identical: bool
    max_hessian_diff: float
    test_mse: list
    test_mse_spread: float
    null_scale: float

    def to_dict(self):
        from dataclasses import asdict

        return asdict(self)


def hessian_constancy(Phi, y, num_minima=20, Phi_test=None, y_test=None, seed=0, null_scale=1.0):
    """Global minima of an over-parameterized least-squares model and their curvature.

    Starts from the minimum-norm solution and adds Gaussian directions
    projected onto the null space of ``Phi``. Every minimum has zero gradient
    and the same Hessian, while test error differs.
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n, p = Phi.shape
    if p <= n:
        raise InvalidSpecError(f"feature dim {p} <= {n} samples: the minimum is unique")
    U, s, Vt = np.linalg.svd(Phi, full_matrices=True)
    rank = int(np.sum(s > s[0] * max(n, p) * np.finfo(float).eps))
    null = Vt[rank:].T
    theta0 = Vt[:rank].T @ ((U[:, :rank].T @ y) / s[:rank])
    rng = np.random.default_rng(seed)
    shifted = [theta0] + [theta0 + null @ (null.T @ (null_scale * rng.standard_normal(p)))
                          for _ in range(num_minima - 1)]
    # monomial features reach ~1e5, so a couple of residual-correction steps pull
    # each point back onto the solution set before its gradient is checked
    minima = []
    for t in shifted:
        for _ in range(2):
            t = t - Vt[:rank].T @ ((U[:, :rank].T @ (Phi @ t - y)) / s[:rank])
        minima.append(t)
    grads = [np.linalg.norm(lsq_gradient(Phi, y, t)) for t in minima]
    hessians = [lsq_hessian(Phi, y, t) for t in minima]
    identical = all(np.array_equal(hessians[0], h) for h in hessians[1:])
    diff = max(float(np.linalg.norm(h - hessians[0])) for h in hessians)
    mse = []
    if Phi_test is not None:
        yt = np.asarray(y_test, dtype=np.float64).reshape(-1)
        mse = [float(np.mean((Phi_test @ t - yt) ** 2)) for t in minima]
    spread = float(max(mse) - min(mse)) if mse else 0.0
    return ConstancyReport(num_minima, p, n, float(max(grads)), identical, diff, mse, spread, null_scale), minima


def poly_features(x, degree):
    """Monomials ``x^0 .. x^degree`` of scalar inputs."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return x[:, None] ** np.arange(degree + 1)
