import dataclasses

import numpy as np
import pytest

from basinprobe import harness as hz
from basinprobe.errors import InsufficientDataError, InvalidSpecError
from basinprobe.io import load_solution, save_solution
from basinprobe.net import Network
from basinprobe.train import InitStrategy, TrainConfig, init_params, train

TINY = dict(n_train=64, hidden="16", batch_size=32, max_epochs=1500, gammas="0,2", attack_sizes="64", seeds_per_cell=2,
            k=5, probes=5)


def tiny(**kw):
    return hz.StudyConfig(**{**TINY, **kw})


def test_config_roundtrip():
    cfg = tiny(inits="he_fan_in,uniform(0,0.1)")
    back = hz.StudyConfig.from_ini(cfg.to_ini())
    assert back == cfg
    assert back.init_grid == ["he_fan_in", "uniform(0,0.1)"]


def test_config_errors():
    with pytest.raises(InvalidSpecError, match="unknown key"):
        hz.StudyConfig.from_ini("[probe]\nkk = 3\n")
    with pytest.raises(InvalidSpecError, match="cannot parse"):
        hz.StudyConfig.from_ini("[probe]\nk = many\n")
    with pytest.raises(InvalidSpecError):
        hz.StudyConfig(gammas="")
    with pytest.raises(InvalidSpecError):
        hz.StudyConfig(inits="xavier")


def test_cells_order():
    cells = tiny(gammas="0,1,4", attack_sizes="64,128").cells()
    assert [(c["gamma"], c["attack_size"]) for c in cells] == [(0.0, 0), (1.0, 64), (1.0, 128), (4.0, 64), (4.0, 128)]


def test_gamma_zero_grid_gives_plain_runs(data_dir):
    cfg = tiny(gammas="0", data_dir=str(data_dir))
    records, statuses = hz.run_minima_zoo(cfg)
    assert len(records) == 2
    assert all(r.gamma == 0 and r.attack_accuracy is None for r in records)
    assert len(statuses) == 2


def test_zoo_records_are_reproducible(data_dir):
    cfg = tiny(data_dir=str(data_dir))
    r1, s1 = hz.run_minima_zoo(cfg)
    r2, s2 = hz.run_minima_zoo(cfg)
    assert [dataclasses.asdict(s) for s in s1] == [dataclasses.asdict(s) for s in s2]
    assert [r.row() for r in r1] == [r.row() for r in r2]
    assert [s.solution_id for s in s1] == ["c000-s00", "c000-s01", "c001-s00", "c001-s01"]
    assert len(r1) == 4, [s.detail for s in s1]
    for r in r1:
        assert r.train_accuracy == 1.0
        assert (r.k, r.probes, r.fd_epsilon) == (5, 5, 1e-5)


def test_zoo_failures_are_logged_not_dropped(data_dir):
    cfg = tiny(data_dir=str(data_dir), gammas="1", attack_sizes="100000", seeds_per_cell=1)
    records, statuses = hz.run_minima_zoo(cfg)
    assert records == [] and statuses[0].status == "error" and "exceeds" in statuses[0].detail
    cfg = tiny(data_dir=str(data_dir), gammas="0", seeds_per_cell=1, max_epochs=1)
    records, statuses = hz.run_minima_zoo(cfg)
    assert records == [] and statuses[0].status == "target_missed"


def test_parallel_zoo_matches_serial(data_dir):
    cfg = tiny(data_dir=str(data_dir), gammas="0", seeds_per_cell=2)
    serial, _ = hz.run_minima_zoo(cfg, threads=1)
    par, _ = hz.run_minima_zoo(cfg, threads=2)
    assert len(serial) == 2
    assert [r.row() for r in serial] == [r.row() for r in par]


def test_correlate_examples():
    recs = [{"test_accuracy": a, "v_of_k": -a, "frob_sq_estimate": 3.0} for a in np.linspace(0.1, 0.9, 8)]
    out = hz.correlate(recs, metrics=("v_of_k",))
    assert out["v_of_k"].rho == pytest.approx(-1.0)
    assert out["v_of_k"].p_value < 0.01
    const = hz.correlate(recs, metrics=("frob_sq_estimate",))["frob_sq_estimate"]
    assert not const.defined and const.rho is None
    with pytest.raises(InsufficientDataError):
        hz.correlate(recs[:4])


def test_permutation_p_value_is_seeded():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(12), rng.standard_normal(12)
    assert hz.spearman_permutation(x, y, 2000, 3) == hz.spearman_permutation(x, y, 2000, 3)
    rho, p = hz.spearman_permutation(x, y, 2000, 3)
    assert 0 < p <= 1


def test_classify():
    assert hz.classify(0.15, 0.76) == "bad"
    assert hz.classify(0.5, 0.76) == "unclassified"
    assert hz.classify(0.8, 0.76) == "good"
    assert hz.good_threshold([0.8, 0.86, 0.9]) == pytest.approx(0.76)


def test_basin_study_table_layout(bundle):
    table, runs = hz.basin_fraction_study(bundle, (8,), ["he_fan_in", "gaussian(0,0.1)"], 2,
                                          TrainConfig(max_epochs=400))
    assert [r["strategy"] for r in table] == ["he_fan_in", "gaussian(0,0.1)"]
    assert len(runs) == 4
    with pytest.raises(InvalidSpecError):
        hz.basin_fraction_study(bundle, (8,), ["he_fan_in"], 1, TrainConfig(gamma=1.0))


def test_first_step_gradient_deterministic(bundle):
    net = Network((bundle.train.dim, 8, 10))
    theta = init_params(net, InitStrategy(seed=1))
    a = hz.first_step_gradient(net, theta, bundle.train)
    b = hz.first_step_gradient(net, theta, bundle.train)
    assert a.tobytes() == b.tobytes()


def test_solution_roundtrip(tmp_path, rng):
    from basinprobe.data import LabeledDataset

    ds = LabeledDataset(rng.standard_normal((20, 3)), rng.integers(0, 2, 20), num_classes=2)
    net = Network((3, 4, 2))
    sol = train(net.with_params(init_params(net, InitStrategy(seed=0))), ds, TrainConfig("sgd", 5, 0.1, 5))
    path = save_solution(sol, tmp_path / "sol")
    back, meta = load_solution(path)
    assert back.params.tobytes() == sol.params.tobytes()
    assert meta["config"]["batch_size"] == 5
    assert (tmp_path / "sol.f64").stat().st_size == 8 * net.num_params


def test_convex_demo():
    report, minima = hz.convex_demo()
    assert report.hessians_identical and report.max_grad_norm <= 1e-8 and report.test_mse_spread > 0
