"""Initialization, full-batch / mini-batch training and the attack objective."""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import LabeledDataset
from .errors import DivergenceError, InvalidSpecError, NumericError
from .net import LossKind, Network, backward, forward, loss_value

log = logging.getLogger(__name__)


class InitKind(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"
    HE_FAN_IN = "he_fan_in"


@dataclass(frozen=True)
class InitStrategy:
    """``uniform(lo, hi)``, ``gaussian(mean, sd)`` or ``he_fan_in``.

    Uniform and Gaussian draws cover every parameter, biases included; He
    initialization draws weights from N(0, 2/fan_in) and zeroes the biases.
    """

    kind: InitKind = InitKind.HE_FAN_IN
    lo: float = 0.0
    hi: float = 1.0
    mean: float = 0.0
    sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", InitKind(self.kind))
        if self.kind is InitKind.UNIFORM and self.hi < self.lo:
            raise InvalidSpecError(f"uniform bounds reversed: [{self.lo}, {self.hi}]")
        if self.kind is InitKind.GAUSSIAN and self.sd < 0:
            raise InvalidSpecError(f"negative sd {self.sd}")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "InitStrategy":
        """Parse ``he``, ``uniform(0,1)`` or ``gaussian(0,0.1)``."""
        text = text.strip().lower().replace(" ", "")
        if text in ("he", "he_fan_in"):
            return cls(InitKind.HE_FAN_IN, seed=seed)
        name, _, rest = text.partition("(")
        args = [float(v) for v in rest.rstrip(")").split(",") if v]
        if name == "uniform" and len(args) == 2:
            return cls(InitKind.UNIFORM, lo=args[0], hi=args[1], seed=seed)
        if name == "gaussian" and len(args) == 2:
            return cls(InitKind.GAUSSIAN, mean=args[0], sd=args[1], seed=seed)
        raise InvalidSpecError(f"cannot parse init strategy {text!r}")

    def label(self) -> str:
        if self.kind is InitKind.HE_FAN_IN:
            return "he_fan_in"
        if self.kind is InitKind.UNIFORM:
            return f"uniform({self.lo:g},{self.hi:g})"
        return f"gaussian({self.mean:g},{self.sd:g})"


INIT_STRATEGIES = ("he_fan_in", "uniform(0,1)", "uniform(0,0.1)", "gaussian(0,0.1)")


def init_params(net: Network, strategy: InitStrategy) -> np.ndarray:
    rng = np.random.default_rng(strategy.seed)
    theta = np.zeros(net.num_params)
    if strategy.kind is InitKind.UNIFORM:
        theta[:] = rng.uniform(strategy.lo, strategy.hi, size=net.num_params)
    elif strategy.kind is InitKind.GAUSSIAN:
        theta[:] = rng.normal(strategy.mean, strategy.sd, size=net.num_params)
    else:
        for slot in net.layout:
            n = slot.weight.stop - slot.weight.start
            theta[slot.weight] = rng.normal(0.0, math.sqrt(2.0 / slot.fan_in), size=n)
    return theta


class Optimizer(str, enum.Enum):
    GD = "gd"
    SGD = "sgd"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Optimizer = Optimizer.SGD
    batch_size: int = 128
    learning_rate: float = 0.1
    max_epochs: int = 200
    target_train_accuracy: float = 1.0
    loss: LossKind = LossKind.SOFTMAX_CROSS_ENTROPY
    gamma: float = 0.0
    shuffle_seed: int = 0
    # optional objective threshold; with gamma > 0 it applies to R_train + gamma*R_attack
    loss_tolerance: Optional[float] = None
    min_epochs: int = 0
    # step decay: lr * lr_decay_factor ** (epoch // lr_decay_every); 0 disables
    lr_decay_every: int = 0
    lr_decay_factor: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        object.__setattr__(self, "loss", LossKind(self.loss))
        if self.learning_rate <= 0:
            raise InvalidSpecError("learning_rate must be positive")
        if not 0 < self.target_train_accuracy <= 1:
            raise InvalidSpecError("target_train_accuracy must lie in (0, 1]")
        if self.gamma < 0:
            raise InvalidSpecError("gamma must be nonnegative")
        if self.optimizer is Optimizer.SGD and self.batch_size < 1:
            raise InvalidSpecError("batch_size must be positive")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["optimizer"] = self.optimizer.value
        d["loss"] = self.loss.value
        return d


@dataclass
class EvalResult:
    loss: float
    accuracy: float
    # "exact_match" for classification, "1-nmse" for regression
    accuracy_kind: str


def evaluate(net: Network, params, ds: LabeledDataset, loss=LossKind.SOFTMAX_CROSS_ENTROPY) -> EvalResult:
    """Mean loss and accuracy of ``params`` on ``ds``.

    Regression "accuracy" is ``1 - MSE / Var(y)`` and is labelled as such.
    """
    if len(ds) == 0:
        raise InvalidSpecError("cannot evaluate on an empty dataset")
    loss = LossKind(loss)
    out = forward(net, ds.inputs, params)
    value = loss_value(out, ds.labels, loss)
    if loss is LossKind.SOFTMAX_CROSS_ENTROPY:
        acc = float(np.mean(np.argmax(out, axis=1) == ds.labels))
        return EvalResult(value, acc, "exact_match")
    y = np.asarray(ds.labels, dtype=np.float64).reshape(out.shape)
    var = float(np.mean((y - y.mean(axis=0)) ** 2))
    mse = float(np.mean((out - y) ** 2))
    acc = 1.0 - mse / var if var > 0 else float(mse == 0.0)
    return EvalResult(value, acc, "1-nmse")


@dataclass
class Solution:
    params: np.ndarray
    train_accuracy: float
    test_accuracy: float
    attack_accuracy: float
    final_losses: tuple  # (R_train, R_attack, R_train + gamma * R_attack)
    epochs_used: int
    reached_target: bool
    config: TrainConfig
    init: Optional[InitStrategy] = None
    layer_dims: tuple = ()
    activation: str = "relu"
    history: list = field(default_factory=list, repr=False)

    def metadata(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "activation": self.activation,
            "num_params": int(self.params.size),
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "attack_accuracy": self.attack_accuracy,
            "final_losses": {
                "R_train": self.final_losses[0],
                "R_attack": self.final_losses[1],
                "R_attack_objective": self.final_losses[2],
            },
            "epochs_used": self.epochs_used,
            "reached_target": self.reached_target,
            "config": self.config.to_dict(),
            "init": None if self.init is None else {**dataclasses.asdict(self.init), "kind": self.init.kind.value},
        }


def attack_objective(net, params, train_ds, attack_ds, gamma, loss):
    """Returns ``(R_train, R_attack, R_train + gamma * R_attack)``."""
    r_train = loss_value(forward(net, train_ds.inputs, params), train_ds.labels, loss)
    r_attack = 0.0
    if attack_ds is not None and len(attack_ds):
        r_attack = loss_value(forward(net, attack_ds.inputs, params), attack_ds.labels, loss)
    return r_train, r_attack, r_train + gamma * r_attack


def _batches(n, size, rng):
    order = rng.permutation(n)
    return [order[i:i + size] for i in range(0, n, size)]


def _accuracy(net, params, ds, loss):
    if ds is None or len(ds) == 0:
        return float("nan")
    return evaluate(net, params, ds, loss).accuracy


def train(net: Network, train_ds: LabeledDataset, cfg: TrainConfig,
          attack_ds: Optional[LabeledDataset] = None, test_ds: Optional[LabeledDataset] = None,
          init: Optional[InitStrategy] = None) -> Solution:
    """Minimize ``R_train + gamma * R_attack`` starting from ``net.params``.

    Stops once the train accuracy target (and ``loss_tolerance``, if set) is
    met after ``min_epochs``, or at ``max_epochs``. One GD epoch is one
    full-batch step; an SGD epoch is one shuffled pass over S_train, each step
    pairing a train batch with a proportionally sized attack batch.
    """
    if cfg.gamma > 0 and (attack_ds is None or len(attack_ds) == 0):
        raise InvalidSpecError("gamma > 0 needs a nonempty attack set")
    use_attack = cfg.gamma > 0
    n = len(train_ds)
    if cfg.optimizer is Optimizer.SGD and cfg.batch_size > n:
        raise InvalidSpecError(f"batch_size {cfg.batch_size} exceeds training set size {n}")
    theta = np.array(net.params, dtype=np.float64)
    rng = np.random.default_rng(cfg.shuffle_seed)
    history = []
    last_finite = 0

    def step_grad(tidx, aidx):
        g = backward(net, train_ds.inputs[tidx], train_ds.labels[tidx], cfg.loss, params=theta)
        grad = g.grad_params
        value = g.loss
        if use_attack:
            ga = backward(net, attack_ds.inputs[aidx], attack_ds.labels[aidx], cfg.loss, params=theta)
            grad = grad + cfg.gamma * ga.grad_params
            value += cfg.gamma * ga.loss
        return value, grad

    def snapshot(epoch):
        r_train, r_attack, total = attack_objective(net, theta, train_ds, attack_ds if use_attack else None,
                                                    cfg.gamma, cfg.loss)
        row = {
            "epoch": epoch,
            "R_train": r_train,
            "R_attack": r_attack,
            "train_acc": _accuracy(net, theta, train_ds, cfg.loss),
            "test_acc": _accuracy(net, theta, test_ds, cfg.loss),
        }
        return row, total

    reached = False
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        try:
            if cfg.optimizer is Optimizer.GD:
                steps = [(slice(None), slice(None))]
            else:
                tb = _batches(n, cfg.batch_size, rng)
                if use_attack:
                    ab = np.array_split(rng.permutation(len(attack_ds)), len(tb))
                else:
                    ab = [None] * len(tb)
                steps = list(zip(tb, ab))
            lr = cfg.learning_rate
            if cfg.lr_decay_every:
                lr *= cfg.lr_decay_factor ** ((epoch - 1) // cfg.lr_decay_every)
            for tidx, aidx in steps:
                value, grad = step_grad(tidx, aidx)
                if not (math.isfinite(value) and np.isfinite(grad).all()):
                    raise DivergenceError(f"non-finite objective at epoch {epoch}", last_finite)
                theta -= lr * grad
            row, total = snapshot(epoch)
        except NumericError as exc:
            if isinstance(exc, DivergenceError):
                raise
            raise DivergenceError(f"divergence at epoch {epoch}: {exc}", last_finite) from exc
        if not (math.isfinite(total) and np.isfinite(theta).all()):
            raise DivergenceError(f"non-finite objective at epoch {epoch}", last_finite)
        last_finite = epoch
        history.append(row)
        if epoch >= cfg.min_epochs and _target_met(row, total, cfg):
            reached = True
            break

    final = attack_objective(net, theta, train_ds, attack_ds if use_attack else None, cfg.gamma, cfg.loss)
    if not reached:
        log.info("target train accuracy not reached after %d epochs", epoch)
        reached = _target_met(history[-1], final[2], cfg) if history else False
    return Solution(
        params=theta,
        train_accuracy=_accuracy(net, theta, train_ds, cfg.loss),
        test_accuracy=_accuracy(net, theta, test_ds, cfg.loss),
        attack_accuracy=_accuracy(net, theta, attack_ds, cfg.loss),
        final_losses=final,
        epochs_used=epoch,
        reached_target=reached,
        config=cfg,
        init=init,
        layer_dims=net.layer_dims,
        activation=net.activation.value,
        history=history,
    )


def _target_met(row, total, cfg):
    if cfg.loss is LossKind.LEAST_SQUARES and cfg.loss_tolerance is not None:
        # regression runs stop on the objective alone
        return total <= cfg.loss_tolerance
    ok = row["train_acc"] >= cfg.target_train_accuracy - 1e-12
    if cfg.loss_tolerance is not None:
        ok = ok and total <= cfg.loss_tolerance
    return ok
