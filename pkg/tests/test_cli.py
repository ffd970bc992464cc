import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from stagedomics.cli import main
from stagedomics.config import SCHEMA, load_config
from stagedomics.errors import ConfigError

TINY = {"synthetic_n": 60, "synthetic_d": 6, "trials": 2, "pretrain_epochs": 10, "joint_epochs": 10,
        "gcn_dims": [8, 8, 4], "head_hidden": 8}


def _write_cfg(path, **extra):
    path.write_text(yaml.safe_dump({**TINY, **extra}))
    return str(path)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = _write_cfg(d / "c.yaml")
    out = d / "out"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    return d, cfg, out


def test_train_writes_artifacts(trained):
    _, _, out = trained
    for name in ("config.yaml", "split.json", "trial_probs.csv"):
        assert (out / name).exists()
    assert len(list((out / "checkpoints").glob("*.npz"))) == 7 * 2
    assert len(list((out / "training_logs").glob("*.csv"))) == 7 * 2
    header = (out / "training_logs" / "1+2+3_t0.csv").read_text().splitlines()[0]
    assert header == "phase,epoch,gcn_1,gcn_2,gcn_3,vcdn,total"


def test_stage_predict_report(trained, capsys):
    _, _, out = trained
    assert main(["stage", "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert set(printed) == {"plan", "thresholds", "staged", "stage_fractions", "expected_cost"}
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {"mode", "views", "plan", "thresholds", "tune", "test", "cost"}
    assert summary["mode"] == "validation"
    assert abs(sum(summary["test"]["stage_fractions"]) - 1) < 1e-12
    for name in ("metrics.csv", "routing.csv", "cost_report.csv", "histogram.csv", "summaries_tune.csv"):
        assert (out / name).exists()

    assert main(["predict", "--out", str(out)]) == 0
    pred = json.loads(capsys.readouterr().out)
    # re-inference from checkpoints reproduces the staged test accuracy
    assert pred["accuracy"] == pytest.approx(summary["test"]["staged"]["acc"], abs=1e-12)
    assert pred["stage_fractions"] == pytest.approx(summary["test"]["stage_fractions"], abs=1e-12)
    assert (out / "predictions.csv").exists()

    assert main(["report", "--out", str(out), "--bins", "4"]) == 0
    rows = (out / "histogram.csv").read_text().splitlines()
    assert len(rows) == 1 + 7 * 2 * 4


def test_global_flags_after_subcommand(tmp_path):
    cfg = _write_cfg(tmp_path / "c.yaml", trials=1)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "5", "--tune-on-test"]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["mode"] == "test"
    assert yaml.safe_load((tmp_path / "o" / "config.yaml").read_text())["seed"] == 5


def test_synth_then_data_flag(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--n", "40", "--d", "5", "--snr", "2,0.5,0.5", "--out", str(data)]) == 0
    assert sorted(p.name for p in data.iterdir())[:3] == ["1_featname.csv", "1_te.csv", "1_tr.csv"]
    cfg = _write_cfg(tmp_path / "c.yaml", trials=1)
    assert main(["run", "--config", cfg, "--data", str(data), "--out", str(tmp_path / "o")]) == 0


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["fly"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["train", "--bogus"])
    assert e.value.code == 1
    assert main(["train", "--config", str(tmp_path / "nope.yaml")]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("synthetic_n: 40\nlearning_rate: 3\n")
    assert main(["train", "--config", str(bad)]) == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_data_error_exit_2(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--n", "20", "--d", "3", "--out", str(data)]) == 0
    lines = (data / "labels_tr.csv").read_text().splitlines()
    lines[1] = "7"
    (data / "labels_tr.csv").write_text("\n".join(lines) + "\n")
    cfg = _write_cfg(tmp_path / "c.yaml", trials=1)
    assert main(["train", "--config", cfg, "--data", str(data), "--out", str(tmp_path / "o")]) == 2
    assert "labels_tr.csv:2" in capsys.readouterr().err


def test_missing_artifacts_exit_2(tmp_path):
    cfg = _write_cfg(tmp_path / "c.yaml")
    assert main(["stage", "--config", cfg, "--out", str(tmp_path / "empty")]) == 2


def test_training_divergence_exit_3(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "c.yaml", lr=1e200)
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "TrainingDivergenceError" in err and "trial 0" in err and "epoch" in err


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "stagedomics.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for sub in ("run", "train", "stage", "predict", "report", "synth"):
        assert sub in r.stdout


# ------------------------------------------------------------- config


def test_empty_config_reproduces_reference_defaults():
    cfg = load_config(None, synthetic_n=40)
    tc = cfg.train_config()
    assert (tc.trials, tc.k_target, tc.gcn_dims, tc.lr) == (10, 2.0, (200, 200, 100), 1e-3)
    assert set(cfg.as_dict()) == set(SCHEMA)


@pytest.mark.parametrize("over", [{}, {"synthetic_n": 40, "data_dir": "x"}, {"synthetic_n": 40, "trials": 0},
                                  {"synthetic_n": 40, "view_costs": [1, 2]},
                                  {"synthetic_n": 40, "val_fraction": 1.5},
                                  {"synthetic_n": 40, "lr": "fast"}])
def test_config_rejects(over):
    with pytest.raises(ConfigError):
        load_config(None, **over)


def test_run_is_deterministic(tmp_path):
    cfg = _write_cfg(tmp_path / "c.yaml", trials=2)
    outs = []
    for k in range(2):
        o = tmp_path / f"o{k}"
        assert main(["run", "--config", cfg, "--out", str(o)]) == 0
        outs.append(o)
    for name in ("trial_probs.csv", "metrics.csv", "summary.json", "routing.csv", "histogram.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    a = np.load(outs[0] / "checkpoints" / "1+2_t1.npz")
    b = np.load(outs[1] / "checkpoints" / "1+2_t1.npz")
    assert all(a[k].tobytes() == b[k].tobytes() for k in a.files)
