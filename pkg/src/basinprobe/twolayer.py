"""Closed-form analysis of one-hidden-layer networks ``f(x) = sum_k a_k sigma(b_k.x + c_k)``.

Covers the analytic partial derivatives, the bias-block Fisher matrix
``I_c``, the input-gradient complexity ``E||grad_x f||^2``, the two
complexity bounds, node scaling and the small-norm constraint set.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import InvalidSpecError, ShapeError, UnsupportedError
from .hessian import ASSEMBLY_FD_EPS, HvpOperator, hvp
from .net import Activation, LossKind, Network, activate, activate_prime, activate_second


@dataclass(frozen=True)
class TwoLayerNet:
    a: np.ndarray  # (K,) output weights
    B: np.ndarray  # (d, K), column k is b_k
    c: np.ndarray  # (K,) hidden biases
    activation: Activation = Activation.RELU
    offset: float = 0.0  # output bias; absent from the bounds

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        B = np.asarray(self.B, dtype=np.float64)
        if B.ndim == 1:
            B = B.reshape(1, -1)
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        if B.shape[1] != a.size or c.size != a.size:
            raise ShapeError(f"inconsistent shapes a{a.shape} B{B.shape} c{c.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def K(self):
        return self.a.size

    @property
    def d(self):
        return self.B.shape[0]

    def to_network(self) -> Network:
        net = Network((self.d, self.K, 1), self.activation)
        return net.with_params(net.flatten([(self.B, self.c), (self.a.reshape(-1, 1), [self.offset])]))

    @classmethod
    def from_network(cls, net: Network) -> "TwoLayerNet":
        if len(net.layer_dims) != 3 or net.output_dim != 1:
            raise ShapeError(f"need a (d, K, 1) network, got {net.layer_dims}")
        (B, c), (a, off) = net.unflatten()
        return cls(a[:, 0].copy(), B.copy(), c.copy(), net.activation, float(off[0]))

    def __call__(self, X):
        X = _as_inputs(self, X)
        return activate(self.activation, X @ self.B + self.c) @ self.a + self.offset

    @property
    def c_indices(self):
        """Positions of ``c`` inside the flat vector of :meth:`to_network`."""
        return np.arange(self.d * self.K, self.d * self.K + self.K)


def random_two_layer(K, d, rng, activation=Activation.RELU) -> TwoLayerNet:
    """a, c ~ N(0, 1); columns of B ~ N(0, I/d)."""
    return TwoLayerNet(rng.standard_normal(K), rng.standard_normal((d, K)) / math.sqrt(d),
                       rng.standard_normal(K), activation)


def _as_inputs(net, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if net.d > 1 or X.size == 1 else X.reshape(-1, 1)
    if X.shape[1] != net.d:
        raise ShapeError(f"inputs must have {net.d} columns, got {X.shape}")
    return X


def analytic_partials(net: TwoLayerNet, X):
    """Per-sample ``(df/da, df/dB, df/dc, df/dx)`` with shapes (N,K), (N,d,K), (N,K), (N,d)."""
    X = _as_inputs(net, X)
    z = X @ net.B + net.c
    s = activate_prime(net.activation, z)
    df_da = activate(net.activation, z)
    df_dc = net.a * s
    df_dB = X[:, :, None] * df_dc[:, None, :]
    df_dx = df_dc @ net.B.T
    return df_da, df_dB, df_dc, df_dx


@dataclass(frozen=True)
class InputDistribution:
    """Empirical inputs, or a diagonal Gaussian sampled ``sample_count`` times."""

    kind: str = "gaussian"
    inputs: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None
    var: Optional[np.ndarray] = None
    sample_count: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("empirical", "gaussian"):
            raise InvalidSpecError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "empirical" and self.inputs is None:
            raise InvalidSpecError("empirical distribution needs inputs")
        if self.kind == "gaussian" and self.sample_count < 2:
            raise InvalidSpecError("need at least 2 Monte Carlo samples")

    @classmethod
    def empirical(cls, X):
        X = np.asarray(X, dtype=np.float64)
        return cls("empirical", inputs=X.reshape(X.shape[0], -1), sample_count=X.shape[0])

    @classmethod
    def standard_normal(cls, d, sample_count=10_000, seed=0):
        return cls("gaussian", mean=np.zeros(d), var=np.ones(d), sample_count=sample_count, seed=seed)

    def samples(self, d):
        if self.kind == "empirical":
            return self.inputs
        mean = np.zeros(d) if self.mean is None else np.asarray(self.mean, dtype=np.float64)
        var = np.ones(d) if self.var is None else np.asarray(self.var, dtype=np.float64)
        rng = np.random.default_rng(self.seed)
        return mean + np.sqrt(var) * rng.standard_normal((self.sample_count, d))


def fisher_c(net: TwoLayerNet, dist: InputDistribution, X=None) -> np.ndarray:
    """``I_c(k1, k2) = E[a_k1 a_k2 s_k1(x) s_k2(x)]`` averaged over the distribution's samples."""
    X = dist.samples(net.d) if X is None else X
    g = analytic_partials(net, X)[2]
    return (g.T @ g) / g.shape[0]


def psd_defect(M):
    """``max(0, -lambda_min) / ||M||_F``."""
    norm = np.linalg.norm(M)
    if norm == 0:
        return 0.0
    return max(0.0, -float(np.linalg.eigvalsh(M)[0])) / norm


@dataclass
class Complexity:
    mean: float  # direct average of ||grad_x f||^2
    bilinear: float  # sum_{k1,k2} b_k1.b_k2 I_c(k1,k2) on the same samples
    variance: float  # sample variance of ||grad_x f||^2
    n: int

    @property
    def std_error(self):
        return math.sqrt(self.variance / self.n)


def input_grad_complexity(net: TwoLayerNet, dist: InputDistribution, X=None) -> Complexity:
    X = dist.samples(net.d) if X is None else X
    _, _, df_dc, df_dx = analytic_partials(net, X)
    sq = np.einsum("ij,ij->i", df_dx, df_dx)
    I_c = (df_dc.T @ df_dc) / X.shape[0]
    bilinear = float(np.sum((net.B.T @ net.B) * I_c))
    var = float(sq.var(ddof=1)) if sq.size > 1 else 0.0
    return Complexity(float(sq.mean()), bilinear, var, int(sq.size))


@dataclass
class BoundReport:
    lhs: float  # 2 E||grad_x f||^2
    fisher_frob_sq: float
    b_norm_4: float
    hessian_c_frob_sq: Optional[float] = None
    d_const: Optional[float] = None
    c_sigma: Optional[float] = None
    residual_term: Optional[float] = None
    r_emp: Optional[float] = None
    mc_error: Optional[float] = None
    theorem1_slack: Optional[float] = None
    theorem1_tol: Optional[float] = None
    corollary1_slack: Optional[float] = None

    @property
    def theorem1_holds(self):
        return self.theorem1_slack >= -self.theorem1_tol

    @property
    def corollary1_holds(self):
        return self.corollary1_slack >= -(self.mc_error + 1e-8)

    def to_dict(self):
        return dataclasses.asdict(self)


def b_norm_4(net):
    return float(np.sum(net.B * net.B) ** 2)


def d_const(net):
    """``max_k |a_k| ||b_k||^2``."""
    if net.K == 0:
        return 0.0
    return float(np.max(np.abs(net.a) * np.sum(net.B * net.B, axis=0)))


def check_theorem1(net: TwoLayerNet, dist: InputDistribution) -> BoundReport:
    """``2 E||grad_x f||^2 <= ||B||_F^4 + ||I_c||_F^2`` on one shared sample set.

    The tolerance is three standard errors of the left-hand side.
    """
    X = dist.samples(net.d)
    cx = input_grad_complexity(net, dist, X)
    I_c = fisher_c(net, dist, X)
    lhs = 2.0 * cx.mean
    fro = float(np.sum(I_c * I_c))
    b4 = b_norm_4(net)
    return BoundReport(lhs=lhs, fisher_frob_sq=fro, b_norm_4=b4,
                       theorem1_slack=b4 + fro - lhs, theorem1_tol=3.0 * 2.0 * cx.std_error)


def second_derivative_sup(activation, lo=-20.0, hi=20.0, step=1e-3) -> float:
    """``sup |sigma''|`` by a grid scan refined with a bounded 1-d search; 0 for ReLU."""
    activation = Activation(activation)
    if activation is Activation.RELU:
        return 0.0
    z = np.arange(lo, hi + step, step)
    g = np.abs(activate_second(activation, z))
    i = int(np.argmax(g))
    res = optimize.minimize_scalar(
        lambda t: -abs(float(activate_second(activation, np.array(t)))),
        bounds=(z[max(i - 1, 0)], z[min(i + 1, z.size - 1)]),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(float(g[i]), -float(res.fun))


def hessian_c_block(net: TwoLayerNet, X, y, fd_epsilon=ASSEMBLY_FD_EPS) -> np.ndarray:
    """The c-block of the least-squares Hessian, assembled from HVP columns."""
    model = net.to_network()
    op = HvpOperator.for_network(model, X, np.asarray(y, dtype=np.float64).reshape(-1, 1),
                                 LossKind.LEAST_SQUARES, fd_epsilon=fd_epsilon)
    idx = net.c_indices
    H = np.empty((net.K, net.K))
    e = np.zeros(model.num_params)
    for j, col in enumerate(idx):
        e[col] = 1.0
        H[:, j] = hvp(op, e)[idx]
        e[col] = 0.0
    return 0.5 * (H + H.T)


def check_corollary1(net: TwoLayerNet, X, y, loss=LossKind.LEAST_SQUARES, c_sigma=None) -> BoundReport:
    """Evaluate both sides of the Hessian-based complexity bound on a training set.

    The expectation is the empirical one over ``X``; ``mc_error`` is
    ``sqrt(Var||grad_x f||^2 / N)`` with constant 1.
    """
    if LossKind(loss) is not LossKind.LEAST_SQUARES:
        raise UnsupportedError("the bound is stated for least-squares loss")
    X = _as_inputs(net, X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    dist = InputDistribution.empirical(X)
    cx = input_grad_complexity(net, dist, X)
    I_c = fisher_c(net, dist, X)
    r_emp = float(np.mean((net(X) - y) ** 2))
    Hc = hessian_c_block(net, X, y)
    c_sigma = second_derivative_sup(net.activation) if c_sigma is None else c_sigma
    D = d_const(net)
    residual_term = 2.0 * c_sigma * D * math.sqrt(r_emp)
    lhs = 2.0 * cx.mean
    hc = float(np.sum(Hc * Hc))
    b4 = b_norm_4(net)
    fro = float(np.sum(I_c * I_c))
    return BoundReport(
        lhs=lhs, fisher_frob_sq=fro, b_norm_4=b4, hessian_c_frob_sq=hc, d_const=D,
        c_sigma=c_sigma, residual_term=residual_term, r_emp=r_emp,
        mc_error=cx.std_error, theorem1_slack=b4 + fro - lhs, theorem1_tol=3.0 * 2.0 * cx.std_error,
        corollary1_slack=hc + b4 + residual_term - lhs,
    )


def node_scale(net: TwoLayerNet, t: float) -> TwoLayerNet:
    """``(a_k, b_k, c_k) -> (a_k / t, t b_k, t c_k)``."""
    if t == 0:
        raise InvalidSpecError("scale t must be nonzero")
    if net.activation is Activation.RELU and t < 0:
        raise InvalidSpecError("ReLU is only positively homogeneous; t must be > 0")
    return TwoLayerNet(net.a / t, net.B * t, net.c * t, net.activation, net.offset)


def constraint_quantity(net):
    return b_norm_4(net) + 2.0 * d_const(net)


def constraint_c_check(net: TwoLayerNet, eta: float):
    """Membership in ``{||B||_F^4 + 2 max_k |a_k| ||b_k||^2 <= eta}`` and the margin."""
    if not eta > 0:
        raise InvalidSpecError("eta must be positive")
    margin = eta - constraint_quantity(net)
    return margin >= 0, margin


SWEEP_FIELDS = ["index", "K", "d", "lhs", "b_norm_4", "fisher_frob_sq", "slack", "tol", "holds"]


def theorem1_sweep(num_nets=1000, max_K=8, max_d=8, samples=10_000, seed=0, activation="relu"):
    """Check the first bound on random nets under standard Gaussian inputs; one dict per net."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(num_nets):
        K = int(rng.integers(1, max_K + 1))
        d = int(rng.integers(1, max_d + 1))
        net = random_two_layer(K, d, rng, activation)
        dist = InputDistribution.standard_normal(d, samples, seed=int(rng.integers(2**31)))
        rep = check_theorem1(net, dist)
        rows.append({"index": i, "K": K, "d": d, "lhs": rep.lhs, "b_norm_4": rep.b_norm_4,
                     "fisher_frob_sq": rep.fisher_frob_sq, "slack": rep.theorem1_slack,
                     "tol": rep.theorem1_tol, "holds": rep.theorem1_holds})
    return rows
