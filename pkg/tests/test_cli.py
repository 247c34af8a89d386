import json
import subprocess
import sys

import pytest

from basinprobe import harness as hz
from basinprobe.cli import main
from basinprobe.io import load_solution, read_csv, read_json


@pytest.fixture
def tiny_config(tmp_path, data_dir):
    cfg = hz.StudyConfig(data_dir=str(data_dir), n_train=64, hidden="16", batch_size=32, max_epochs=1500,
                         gammas="0", attack_sizes="64", seeds_per_cell=1, k=5, probes=5)
    path = tmp_path / "tiny.ini"
    path.write_text(cfg.to_ini())
    return path


def test_print_default_config_roundtrips(capsys):
    assert main(["--print-default-config"]) == 0
    assert hz.StudyConfig.from_ini(capsys.readouterr().out) == hz.StudyConfig()


def test_usage_errors_exit_2():
    assert main([]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_domain_error_exit_1_with_json(tmp_path, capsys):
    assert main(["spectrum", "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "InvalidSpecError" and err["subcommand"] == "spectrum" and "--solution" in err["message"]


def test_convex_demo_manifest_and_no_overwrite(tmp_path, capsys):
    out = tmp_path / "cd"
    assert main(["convex-demo", "--out", str(out), "--seed", "3"]) == 0
    man = read_json(out / "manifest.json")
    assert man["subcommand"] == "convex-demo" and man["seed"] == 3
    assert set(man["artifacts"]) == {"constancy_report.json", "minima.csv"}
    assert "timestamp" not in json.dumps(man)
    first = (out / "constancy_report.json").read_bytes()
    assert main(["convex-demo", "--out", str(out), "--seed", "3"]) == 1
    assert "--force" in capsys.readouterr().err
    assert main(["convex-demo", "--out", str(out), "--seed", "3", "--force"]) == 0
    assert (out / "constancy_report.json").read_bytes() == first


def test_train_then_spectrum(tmp_path, tiny_config):
    tr = tmp_path / "train"
    assert main(["train", "--config", str(tiny_config), "--out", str(tr), "--seed", "1"]) == 0
    net, meta = load_solution(tr / "solution.json")
    assert net.num_params == meta["num_params"]
    assert read_csv(tr / "metrics.csv")
    sp = tmp_path / "spec"
    assert main(["spectrum", "--config", str(tiny_config), "--solution", str(tr / "solution.json"),
                 "--out", str(sp)]) == 0
    eig = [float(r["eigenvalue"]) for r in read_csv(sp / "eigenvalues.csv")]
    assert eig == sorted(eig, reverse=True) and len(eig) == net.num_params
    rep = read_json(sp / "spectral_report.json")
    assert rep["k_requested"] == 5 and rep["probes"] == 5


def test_zoo_artifacts_are_deterministic(tmp_path, tiny_config):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["zoo", "--config", str(tiny_config), "--out", str(out), "--threads", "1",
                     "--gamma", "0", "--gamma", "2"]) == 0
        outs.append(out)
    for f in ("records.csv", "runs.csv", "spectra/c000-s00.csv", "manifest.json"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    assert len(read_csv(outs[0] / "runs.csv")) == 2
    # fewer than five solutions: no correlation is attempted
    assert not (outs[0] / "correlation.json").exists()


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "basinprobe.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "basinprobe" in res.stdout
