import numpy as np
import pytest
from hypothesis import given, strategies as st

from basinprobe.data import AttackSpec, LabeledDataset, build_attack_set, gen_poly
from basinprobe.errors import DivergenceError, InvalidSpecError
from basinprobe.net import Network, forward
from basinprobe.train import (
    InitStrategy, TrainConfig, attack_objective, evaluate, init_params, train,
)


def test_uniform_degenerate_interval_is_zero():
    net = Network((3, 4, 2))
    assert not init_params(net, InitStrategy("uniform", lo=0.0, hi=0.0)).any()


def test_he_variance_fan_in_8():
    net = Network((8, 100_000 // 8 + 1, 1))
    theta = init_params(net, InitStrategy("he_fan_in", seed=4))
    slot = net.layout[0]
    w = theta[slot.weight]
    assert w.size >= 100_000
    assert abs(w.var() - 0.25) / 0.25 < 0.05
    assert not theta[slot.bias].any()


def test_gaussian_sd():
    net = Network((10, 10_000, 1))
    theta = init_params(net, InitStrategy.parse("gaussian(0,0.1)", seed=2))
    assert abs(theta.std() - 0.1) / 0.1 < 0.05


def test_init_parse_and_determinism():
    assert InitStrategy.parse("uniform(0,0.1)").label() == "uniform(0,0.1)"
    assert InitStrategy.parse("he").label() == "he_fan_in"
    with pytest.raises(InvalidSpecError):
        InitStrategy.parse("xavier")
    net = Network((3, 5, 2))
    a = init_params(net, InitStrategy.parse("gaussian(0,1)", seed=9))
    assert np.array_equal(a, init_params(net, InitStrategy.parse("gaussian(0,1)", seed=9)))


def _clf(rng, n=40, d=3, k=3):
    return LabeledDataset(rng.standard_normal((n, d)), rng.integers(0, k, n), num_classes=k)


@given(seed=st.integers(0, 1000), gamma=st.floats(0, 5))
def test_attack_identity(seed, gamma):
    rng = np.random.default_rng(seed)
    ds, att = _clf(rng), _clf(rng, 20)
    net = Network((3, 4, 3), "tanh", rng.standard_normal(31))
    r_train, r_att, total = attack_objective(net, net.params, ds, att, gamma, "softmax_cross_entropy")
    assert abs(total - r_train - gamma * r_att) <= 1e-12 * abs(total)


def test_gamma_zero_is_plain_training(rng):
    ds, att = _clf(rng), _clf(rng, 20)
    net = Network((3, 4, 3), "relu", rng.standard_normal(31))
    cfg = TrainConfig("sgd", 8, 0.1, 3, 1.0, shuffle_seed=1)
    a = train(net, ds, cfg)
    b = train(net, ds, cfg, attack_ds=att)
    assert np.array_equal(a.params, b.params)
    assert a.final_losses[2] == a.final_losses[0]


def test_gd_on_1d_quadratic_is_monotone():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20)
    ds = LabeledDataset(x.reshape(-1, 1), 3.0 * x)
    net = Network((1, 1), "relu", [0.0, 0.0])
    # Hessian of (1/N) sum (w x + b - y)^2
    X1 = np.column_stack([x, np.ones_like(x)])
    L = np.linalg.eigvalsh(2 * X1.T @ X1 / 20)[-1]
    sol = train(net, ds, TrainConfig("gd", 20, 1.0 / L, 300, 1.0, "least_squares", loss_tolerance=1e-14))
    losses = [row["R_train"] for row in sol.history]
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-10


def test_two_layer_fits_five_point_cubic():
    ds = gen_poly(5, 0.1, seed=0)
    net = Network((1, 40, 1), "relu")
    theta = init_params(net, InitStrategy("he_fan_in", seed=1))
    cfg = TrainConfig("gd", 5, 0.01, 100_000, 1.0, "least_squares", loss_tolerance=1e-3)
    sol = train(net.with_params(theta), ds, cfg)
    assert sol.reached_target and sol.final_losses[0] < 1e-3


def test_training_is_deterministic(rng):
    ds = _clf(rng)
    net = Network((3, 6, 3), "relu")
    theta = init_params(net, InitStrategy(seed=5))
    cfg = TrainConfig("sgd", 16, 0.1, 20, shuffle_seed=3)
    a = train(net.with_params(theta), ds, cfg)
    b = train(net.with_params(theta), ds, cfg)
    assert a.params.tobytes() == b.params.tobytes()
    assert [r["R_train"] for r in a.history] == [r["R_train"] for r in b.history]
    assert len(a.history) == a.epochs_used


def test_divergence_reports_last_finite_epoch(rng):
    ds = LabeledDataset(rng.standard_normal((10, 2)) * 100, rng.standard_normal(10) * 100)
    net = Network((2, 8, 1), "relu", rng.standard_normal(33))
    with pytest.raises(DivergenceError) as info:
        train(net, ds, TrainConfig("gd", 10, 10.0, 1000, 1.0, "least_squares", loss_tolerance=0.0))
    assert info.value.last_finite_epoch >= 0


def test_config_validation(rng):
    with pytest.raises(InvalidSpecError):
        TrainConfig(learning_rate=0)
    with pytest.raises(InvalidSpecError):
        TrainConfig(gamma=-1)
    ds = _clf(rng)
    net = Network((3, 2, 3))
    with pytest.raises(InvalidSpecError):
        train(net, ds, TrainConfig(gamma=1.0))
    with pytest.raises(InvalidSpecError):
        train(net, ds, TrainConfig("sgd", 1000))


def test_evaluate_examples(rng):
    X = rng.standard_normal((6, 1))
    net = Network((1, 1), "relu", [2.0, 1.0])
    reg = LabeledDataset(X, 2 * X[:, 0] + 1)
    res = evaluate(net, None, reg, "least_squares")
    assert res.accuracy == 1.0 and res.accuracy_kind == "1-nmse"
    y = np.repeat(np.arange(10), 10)
    const = Network((1, 10), "relu", np.r_[np.zeros(10), np.eye(10)[0]])
    res = evaluate(const, None, LabeledDataset(np.zeros((100, 1)), y, num_classes=10))
    assert res.accuracy == pytest.approx(0.1)


def test_attack_run_fits_wrong_labels_and_hurts_test(bundle):
    net = Network((bundle.train.dim, 64, 10), "relu")
    theta = init_params(net, InitStrategy(seed=0))
    att = build_attack_set(AttackSpec(bundle.attack_pool.subset(slice(0, 512)), 0))
    cfg = TrainConfig("sgd", 128, 0.1, 1500, gamma=4.0, shuffle_seed=0)
    sol = train(net.with_params(theta), bundle.train, cfg, att, bundle.test)
    clean = train(net.with_params(theta), bundle.train, TrainConfig("sgd", 128, 0.1, 1500, shuffle_seed=0), None,
                  bundle.test)
    assert sol.attack_accuracy > 0.9
    assert sol.test_accuracy < clean.test_accuracy - 0.2
    r = attack_objective(net, sol.params, bundle.train, att, 4.0, "softmax_cross_entropy")
    assert abs(sol.final_losses[2] - r[2]) <= 1e-12 * r[2]
