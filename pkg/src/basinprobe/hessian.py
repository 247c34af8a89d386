"""Hessian probes: finite-difference HVPs, dense assembly, spectra, V(k), Frobenius estimates."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .eigen import lanczos, symmetric_eigh
from .errors import DenseCapError, NumericError, ShapeError, UndefinedMetricError, UnsupportedError
from .net import LossKind, Network, backward, forward, param_jacobian

DEFAULT_FD_EPS = 1e-5
ASSEMBLY_FD_EPS = 1e-4
DENSE_CAP = 4096
DEFAULT_K = 50
DEFAULT_PROBES = 100


@dataclass(frozen=True)
class HvpOperator:
    """``v -> [grad R(theta + eps v) - grad R(theta - eps v)] / (2 eps)``.

    ``grad_fn`` maps a parameter vector to the gradient of the loss; build
    one for a network and dataset with :meth:`for_network`.
    """

    grad_fn: Callable[[np.ndarray], np.ndarray]
    theta: np.ndarray
    fd_epsilon: float = DEFAULT_FD_EPS
    description: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64, copy=True)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if not self.fd_epsilon > 0:
            raise ValueError("fd_epsilon must be positive")

    @classmethod
    def for_network(cls, net: Network, X, targets, loss=LossKind.SOFTMAX_CROSS_ENTROPY,
                    params=None, fd_epsilon=DEFAULT_FD_EPS) -> "HvpOperator":
        X = np.asarray(X, dtype=np.float64)
        targets = np.asarray(targets)
        loss = LossKind(loss)

        def grad_fn(theta):
            return backward(net, X, targets, loss, params=theta).grad_params

        theta = net.params if params is None else params
        desc = {"layer_dims": list(net.layer_dims), "activation": net.activation.value,
                "loss": loss.value, "num_samples": int(X.shape[0])}
        return cls(grad_fn, theta, fd_epsilon, desc)

    @property
    def dim(self):
        return self.theta.size

    def with_epsilon(self, fd_epsilon) -> "HvpOperator":
        return dataclasses.replace(self, fd_epsilon=fd_epsilon)

    def __call__(self, v):
        return hvp(self, v)


def hvp(op: HvpOperator, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != op.theta.shape:
        raise ShapeError(f"direction has shape {v.shape}, parameters {op.theta.shape}")
    if not np.isfinite(v).all():
        raise NumericError("direction is not finite")
    eps = op.fd_epsilon
    try:
        gp = op.grad_fn(op.theta + eps * v)
        gm = op.grad_fn(op.theta - eps * v)
    except NumericError as exc:
        raise NumericError(f"gradient failed at perturbed point: {exc}") from exc
    if not (np.isfinite(gp).all() and np.isfinite(gm).all()):
        raise NumericError("non-finite gradient at perturbed point")
    return (gp - gm) / (2.0 * eps)


def assemble_hessian(op: HvpOperator, dense_cap=DENSE_CAP):
    """Column-by-column HVP assembly; returns ``(H, symmetry_defect)``.

    ``symmetry_defect`` is ``||H - H^T||_F / ||H||_F`` before symmetrizing.
    """
    p = op.dim
    if p > dense_cap:
        raise DenseCapError(f"{p} parameters exceed the dense cap {dense_cap}; use the Lanczos path")
    H = np.empty((p, p))
    e = np.zeros(p)
    for j in range(p):
        e[j] = 1.0
        H[:, j] = hvp(op, e)
        e[j] = 0.0
    norm = np.linalg.norm(H)
    defect = float(np.linalg.norm(H - H.T) / norm) if norm > 0 else 0.0
    return 0.5 * (H + H.T), defect


def exact_hessian(net: Network, X, targets, loss=LossKind.LEAST_SQUARES, params=None,
                  fd_epsilon=ASSEMBLY_FD_EPS, dense_cap=DENSE_CAP) -> np.ndarray:
    op = HvpOperator.for_network(net, X, targets, loss, params, fd_epsilon)
    return assemble_hessian(op, dense_cap)[0]


def fisher_residual_split(net: Network, X, y, params=None, fd_epsilon=ASSEMBLY_FD_EPS,
                          loss=LossKind.LEAST_SQUARES, dense_cap=DENSE_CAP):
    """Split the least-squares Hessian into its Gauss-Newton and residual parts.

    For ``R = (1/N) sum (f_i - y_i)^2``::

        fisher   = (2/N) sum grad f_i grad f_i^T
        residual = (2/N) sum (f_i - y_i) hess f_i

    The residual part is differentiated numerically from ``sum r_i grad f_i``
    with the residuals frozen at ``params``.
    """
    if LossKind(loss) is not LossKind.LEAST_SQUARES:
        raise UnsupportedError("the Fisher/residual split is defined for least-squares loss only")
    if net.output_dim != 1:
        raise UnsupportedError("the Fisher/residual split needs a scalar-output network")
    theta = net.params if params is None else np.asarray(params, dtype=np.float64)
    p = theta.size
    if p > dense_cap:
        raise DenseCapError(f"{p} parameters exceed the dense cap {dense_cap}")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    J = param_jacobian(net, X, theta)
    fisher = (2.0 / n) * (J.T @ J)
    r = forward(net, X, theta)[:, 0] - np.asarray(y, dtype=np.float64).reshape(-1)
    weights = (2.0 / n) * r

    def weighted_grad(t):
        return weights @ param_jacobian(net, X, t)

    residual = np.empty((p, p))
    e = np.zeros(p)
    for j in range(p):
        e[j] = fd_epsilon
        residual[:, j] = (weighted_grad(theta + e) - weighted_grad(theta - e)) / (2.0 * fd_epsilon)
        e[j] = 0.0
    residual = 0.5 * (residual + residual.T)
    return fisher, residual


def top_k_eigs(op_or_matrix, k, method="auto", dense_cap=DENSE_CAP, tol=1e-8, seed=0,
               want_vectors=False, eigensolver="lapack"):
    """Largest ``k`` eigenvalues, descending.

    A dense matrix is decomposed fully; an :class:`HvpOperator` is either
    assembled densely (``method="dense"``, or ``"auto"`` within the cap) or
    probed with Lanczos (``method="lanczos"``).
    Returns ``(values, vectors_or_None, all_dense_values_or_None)``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(op_or_matrix, HvpOperator):
        op = op_or_matrix
        if method == "lanczos" or (method == "auto" and op.dim > dense_cap):
            vals, vecs, _ = lanczos(op, op.dim, k, tol=tol, seed=seed, want_vectors=want_vectors)
            return vals, vecs, None
        A = assemble_hessian(op, dense_cap)[0]
    else:
        A = np.asarray(op_or_matrix, dtype=np.float64)
        if method == "lanczos":
            vals, vecs, _ = lanczos(lambda v: A @ v, A.shape[0], k, tol=tol, seed=seed,
                                    want_vectors=want_vectors)
            return vals, vecs, None
    w, V = symmetric_eigh(A, eigensolver, want_vectors)
    return w[:k], (V[:, :k] if want_vectors else None), w


POSITIVE_REL_THRESHOLD = 1e-10


def v_of_k(eigenvalues, k):
    """Sum of natural logs of the top-``k`` strictly positive eigenvalues.

    Eigenvalues at or below ``1e-10 * lambda_1`` are skipped. Returns
    ``(value, k_used)``.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.size == 0 or lam[0] <= 0:
        raise UndefinedMetricError("no positive eigenvalues; V(k) is undefined")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    pos = lam[lam > POSITIVE_REL_THRESHOLD * lam[0]]
    used = pos[:k]
    return float(np.sum(np.log(used))), int(used.size)


def frobenius_estimate(op, M=DEFAULT_PROBES, seed=0):
    """Mean of ``||H v||^2`` over ``M`` standard Gaussian probes and its standard error.

    ``op`` may be an :class:`HvpOperator` or any callable ``v -> H v`` with a
    ``dim`` attribute or a dense matrix.
    """
    if M < 2:
        raise ValueError("need at least 2 probes")
    if isinstance(op, np.ndarray):
        A = op
        apply, dim = (lambda v: A @ v), A.shape[0]
    else:
        apply, dim = op, op.dim
    rng = np.random.default_rng(seed)
    samples = np.empty(M)
    for i in range(M):
        v = rng.standard_normal(dim)
        hv = apply(v)
        samples[i] = hv @ hv
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(M))
    return mean, se


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    k_requested: int
    k_used: int
    v_of_k: Optional[float]
    frob_sq_estimate: float
    frob_sq_se: float
    num_negative: Optional[int]
    fisher_share: Optional[float] = None
    fd_epsilon: float = DEFAULT_FD_EPS
    assembly_fd_epsilon: Optional[float] = None
    probes: int = DEFAULT_PROBES
    spectrum: str = "dense"
    log_base: str = "e"

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["eigenvalues"] = [float(v) for v in self.eigenvalues]
        return d


def spectral_report(op: HvpOperator, k=DEFAULT_K, M=DEFAULT_PROBES, seed=0, method="auto",
                    dense_cap=DENSE_CAP, assembly_eps=ASSEMBLY_FD_EPS, fisher=None) -> SpectralReport:
    """Spectrum, V(k) and Frobenius estimate for one minimum.

    The dense path assembles with ``assembly_eps`` and reports the full
    spectrum; the Frobenius estimate always uses ``op.fd_epsilon``.
    ``fisher`` (a dense matrix) adds ``||fisher||_F / ||H||_F``.
    """
    use_dense = method == "dense" or (method == "auto" and op.dim <= dense_cap)
    fisher_share = None
    if use_dense:
        H = assemble_hessian(op.with_epsilon(assembly_eps), dense_cap)[0]
        eig, _ = symmetric_eigh(H)
        num_negative = int(np.sum(eig < -POSITIVE_REL_THRESHOLD * max(eig[0], 0.0)))
        if fisher is not None:
            fisher_share = float(np.linalg.norm(fisher) / np.linalg.norm(H))
        spectrum = "dense"
    else:
        eig, _, _ = lanczos(op, op.dim, k, seed=seed)
        num_negative = None
        spectrum = "lanczos"
    try:
        vk, k_used = v_of_k(eig, k)
    except UndefinedMetricError:
        vk, k_used = None, 0
    frob, se = frobenius_estimate(op, M, seed)
    return SpectralReport(eig, k, k_used, vk, frob, se, num_negative, fisher_share,
                          op.fd_epsilon, assembly_eps if use_dense else None, M, spectrum)
