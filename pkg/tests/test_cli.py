import json

import pytest

from helpers import write_fake_mnist
from uconv.cli import ConfigError, build_config, main, parse_config_text
from uconv.experiments.ccae import CcaeConfig
from uconv.experiments.mnist import CcnnConfig
from uconv.experiments.report import RunReport


def _run_dir(out):
    (d,) = [p for p in out.iterdir() if p.is_dir()]
    return d


def test_parse_config_text():
    raw = parse_config_text("# comment\nlr = 0.01  # trailing\n\nhead = 10, 5\n")
    assert raw == {"lr": "0.01", "head": "10, 5"}
    with pytest.raises(ConfigError):
        parse_config_text("just words")


def test_build_config_types_and_unknown_keys():
    cfg, extras = build_config(CcnnConfig, {"lr": "0.5", "head": "10,5", "first_layer": "discrete"})
    assert cfg.lr == 0.5 and cfg.head == (10, 5) and cfg.first_layer == "discrete"
    with pytest.raises(ConfigError):
        build_config(CcnnConfig, {"nope": "1"})
    with pytest.raises(ConfigError):
        build_config(CcnnConfig, {"epochs": "two"})
    _, extras = build_config(CcaeConfig, {"repeats": "2"}, {"repeats": 5})
    assert extras == {"repeats": 2}


def test_oracle_check(tmp_path, capsys):
    assert main(["oracle-check", "--out", str(tmp_path)]) == 0
    assert "transpose_fixture_continuous ok" in capsys.readouterr().out


def test_gradcheck_table_and_failure_code(tmp_path, capsys):
    assert main(["gradcheck", "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    out = capsys.readouterr().out
    assert "max rel. error" in out and "ccnn_toy" in out
    assert main(["gradcheck", "--out", str(tmp_path / "b"), "--set", "tol=1e-30"]) == 3


def test_usage_and_config_errors(tmp_path, capsys):
    assert main(["oracle-check", "--frob"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["no-such-command"]) == 1
    assert main(["train-ccae", "--out", str(tmp_path), "--set", "bogus=1"]) == 1
    assert main(["train-ccae", "--out", str(tmp_path), "--set", "noequals"]) == 1


def test_missing_mnist_is_io_error(tmp_path, capsys):
    assert main(["train-mnist", "--out", str(tmp_path), "--set", f"mnist_dir={tmp_path / 'none'}"]) == 2
    assert "MNIST" in capsys.readouterr().err


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny run\ntol = 1e-30\n")
    assert main(["gradcheck", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 3
    assert main(["gradcheck", "--config", str(cfg), "--set", "tol=1e-5", "--out", str(tmp_path / "b")]) == 0
    echo = json.loads((_run_dir(tmp_path / "b") / "config.json").read_text())
    assert echo["tol"] == 1e-5 and echo["seed"] == 0


def test_train_mnist_both_first_layers(tmp_path):
    mnist = write_fake_mnist(tmp_path / "mnist")
    common = ["--set", f"mnist_dir={mnist}", "--set", "train_n=40", "--set", "test_n=20", "--set", "epochs=1"]
    reports = []
    for layer in ("continuous", "discrete"):
        out = tmp_path / layer
        assert main(["train-mnist", "--out", str(out), "--set", f"first_layer={layer}", *common]) == 0
        d = _run_dir(out)
        assert (d / "model.ucnv").exists()
        reports.append(RunReport.from_json((d / f"mnist_{layer}.json").read_text()))
    assert set(reports[0].metrics) == set(reports[1].metrics)
    assert reports[0].config["cli"]["first_layer"] == "continuous"


def test_gen_data_then_offline_training(tmp_path, capsys):
    gen = ["gen-data", "--out", str(tmp_path / "g"), "--seed", "2", "--set", "bump_samples=10",
           "--set", "bump_points=200", "--set", "wave.n_points=150", "--set", "wave.n_times=12"]
    assert main(gen) == 0
    data = _run_dir(tmp_path / "g")
    wave = data / "traveling_wave" / "manifest.csv"
    bump = data / "bump_flow" / "manifest.csv"
    assert main(["train-mpnet", "--out", str(tmp_path / "m"), "--set", f"data={wave}", "--set", "n_train=6",
                 "--set", "epochs=1", "--set", "time_epochs=2", "--set", "pod_rank=3"]) == 0
    rows = (_run_dir(tmp_path / "m") / "per_snapshot.csv").read_text().splitlines()
    assert rows[0] == "index,t,split,mpnet_rel_l2,pod_rel_l2" and len(rows) == 13
    assert main(["train-ccae", "--out", str(tmp_path / "c"), "--set", f"data={bump}", "--set", "epochs=1",
                 "--set", "repeats=1", "--set", "archs=mlp"]) == 0
    assert main(["pod-baseline", "--out", str(tmp_path / "p"), "--set", f"data={wave}", "--set", "n_train=6",
                 "--set", "pod_rank=3"]) == 0
    assert main(["pod-baseline", "--out", str(tmp_path / "p"), "--set", f"data={tmp_path / 'x.csv'}"]) == 2


def test_seed_is_honored(tmp_path):
    args = ["train-ccae", "--set", "n_samples=10", "--set", "n_points=150", "--set", "epochs=1",
            "--set", "repeats=1", "--set", "archs=mlp"]
    sigs = []
    for k, seed in enumerate(["4", "4", "5"]):
        out = tmp_path / str(k)
        assert main([*args, "--out", str(out), "--seed", seed]) == 0
        (report,) = _run_dir(out).glob("mlp_*.json")
        sigs.append(RunReport.from_json(report.read_text()).metric_signature())
    assert sigs[0] == sigs[1] and sigs[0] != sigs[2]
