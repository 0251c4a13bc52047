import json

import numpy as np
import pytest

from arpolib.cli import build_report, cli, ema, windowed_mean_std
from arpolib.internal.errors import ConfigurationError
from arpolib.trainer import Algo, load_config, save_config


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


@pytest.fixture()
def config_file(tmp_path, make_train_config):
    path = tmp_path / "config.yaml"
    save_config(make_train_config(algo=Algo.ARPO), path)
    return path


def test_unknown_flag_is_a_usage_error(capsys):
    assert cli(["train", "--run-dir", "x", "--frobnicate"]) == 2

    err = capsys.readouterr().err
    assert "usage:" in err
    record = last_json(err)
    assert record["error"] == "usage"
    assert "--frobnicate" in record["message"]


def test_missing_command_is_a_usage_error(capsys):
    assert cli([]) == 2
    assert last_json(capsys.readouterr().err)["error"] == "usage"


def test_invalid_config_is_a_usage_error(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("world:\n  train_styles: [0, 1]\n  test_styles: [1]\n")

    code = cli(["train", "--config", str(path), "--run-dir", str(tmp_path / "run")])
    assert code == 2
    record = last_json(capsys.readouterr().err)
    assert record["error"] == "configuration"
    assert record["type"] == "ConfigurationError"


def test_bad_override_is_a_usage_error(tmp_path, config_file, capsys):
    code = cli(
        [
            "train",
            "--config",
            str(config_file),
            "--set",
            "policy.momentum=1",
            "--run-dir",
            str(tmp_path / "run"),
        ]
    )
    assert code == 2
    assert "policy.momentum" in last_json(capsys.readouterr().err)["message"]


def test_eval_of_missing_run_is_a_runtime_error(tmp_path, capsys):
    assert cli(["eval", "--run-dir", str(tmp_path / "missing")]) == 1
    assert last_json(capsys.readouterr().err)["error"] == "runtime"


def test_train_eval_and_translate_grid(tmp_path, config_file, capsys):
    run_dir = tmp_path / "run"
    code = cli(
        ["--log-level", "info", "train", "--config", str(config_file)]
        + ["--run-dir", str(run_dir), "--set", "eval_interval=3"]
    )
    assert code == 0
    trained = json.loads(capsys.readouterr().out)
    assert trained["iterations"] == 3
    assert np.isfinite(trained["eval_test_mean"])
    assert (run_dir / "run.log").read_text()

    assert cli(["eval", "--run-dir", str(run_dir), "--episodes", "2"]) == 0
    evaluated = json.loads(capsys.readouterr().out)
    assert set(evaluated) == {"train", "test"}
    assert evaluated["test"]["episodes"] == 2

    assert cli(["translate-grid", "--run-dir", str(run_dir), "--n-images", "2"]) == 0
    grid = json.loads(capsys.readouterr().out)
    assert grid["n_domains"] == 2
    assert (run_dir / "translation_grid.png").exists()


def test_cluster_command(tmp_path, config_file, capsys):
    out = tmp_path / "clusters"
    code = cli(
        ["cluster", "--config", str(config_file), "--out", str(out)]
        + ["--observations", "48", "--per-cluster", "3"]
    )
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert record["n_clusters"] == 2
    assert 0.5 <= record["style_purity"] <= 1.0
    assert (out / "cluster.npz").exists() and (out / "montage.png").exists()


def test_report_over_seeds(tmp_path, config_file, capsys):
    for seed in range(3):
        code = cli(
            ["train", "--config", str(config_file)]
            + ["--set", "algo=ppo", "--set", f"seed={seed}", "--set", "eval_interval=3"]
            + ["--run-dir", str(tmp_path / "runs" / f"seed_{seed}")]
        )
        assert code == 0
    capsys.readouterr()

    out = tmp_path / "report"
    assert cli(["report", str(tmp_path / "runs"), "--out", str(out)]) == 0
    record = json.loads(capsys.readouterr().out)
    (row,) = record["ablation"]
    assert row["group"] == "algo=ppo"
    assert row["seeds"] == 3
    for name in ["ablation.csv", "curves.csv", "report.json", "returns.png", "adv_kl.png"]:
        assert (out / name).exists()
    assert (out / "seed_returns.png").exists()
    assert record["figures"] == []
    stored = json.loads((out / "report.json").read_text())
    assert stored["seeds"] == {"algo=ppo": [0, 1, 2]}


def test_report_needs_three_seeds(tmp_path, config_file, capsys):
    for seed in range(2):
        cli(
            ["train", "--config", str(config_file), "--set", f"seed={seed}"]
            + ["--set", "algo=ppo", "--run-dir", str(tmp_path / "runs" / str(seed))]
        )
    capsys.readouterr()

    assert cli(["report", str(tmp_path / "runs"), "--out", str(tmp_path / "r")]) == 2
    assert "at least 3 seeds" in last_json(capsys.readouterr().err)["message"]
    with pytest.raises(ConfigurationError):
        build_report([tmp_path / "runs" / "0", tmp_path / "runs" / "1"])


def test_ablate_over_beta(tmp_path, config_file, capsys):
    out = tmp_path / "ablation"
    code = cli(
        ["ablate", "--config", str(config_file), "--param", "beta"]
        + ["--values", "0", "5", "--seeds", "0", "1", "2", "--out", str(out)]
    )
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert len(record["runs"]) == 6
    assert [row["group"] for row in record["ablation"]] == [
        "policy.beta1=0.0",
        "policy.beta1=5.0",
    ]
    assert (out / "report" / "ablation.csv").exists()
    figures = out / "report" / "runs"
    assert (figures / "beta=0_seed_0_montage.png").exists()
    assert (figures / "beta=5_seed_2_translation_grid.png").exists()


def test_train_takes_algo_and_seed_flags(tmp_path, config_file, capsys):
    run_dir = tmp_path / "run"
    code = cli(
        ["train", "--config", str(config_file), "--algo", "arpo", "--seed", "1"]
        + ["--run-dir", str(run_dir)]
    )

    assert code == 0
    assert (run_dir / "metrics.csv").exists()
    stored = load_config(run_dir / "config.yaml")
    assert stored.algo is Algo.ARPO
    assert stored.seed == 1

    assert cli(["train", "--algo", "sac", "--run-dir", str(tmp_path / "sac")]) == 2
    assert "--algo" in last_json(capsys.readouterr().err)["message"]


def test_report_takes_comma_separated_runs(tmp_path, config_file, capsys):
    run_dirs = [str(tmp_path / f"seed_{seed}") for seed in range(3)]
    for seed, run_dir in enumerate(run_dirs):
        code = cli(
            ["train", "--config", str(config_file), "--algo", "ppo"]
            + ["--seed", str(seed), "--run-dir", run_dir]
        )
        assert code == 0
    capsys.readouterr()

    out = tmp_path / "report"
    assert cli(["report", "--runs", ",".join(run_dirs), "--out", str(out)]) == 0
    (row,) = json.loads(capsys.readouterr().out)["ablation"]
    assert row["group"] == "algo=ppo"
    assert row["seeds"] == 3
    assert (out / "ablation.csv").exists()

    assert cli(["report", "--out", str(out)]) == 2


def test_ablate_takes_comma_separated_values(tmp_path, config_file, capsys):
    out = tmp_path / "clusters"
    code = cli(
        ["ablate", "--config", str(config_file), "--set", "warmup_observations=64"]
        + ["--param", "n_clusters", "--values", "2,3,5", "--out", str(out)]
    )

    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert len(record["runs"]) == 9
    assert [row["group"] for row in record["ablation"]] == [
        "cluster.n_clusters=2",
        "cluster.n_clusters=3",
        "cluster.n_clusters=5",
    ]
    stored = load_config(out / "n_clusters=5" / "seed_0" / "config.yaml")
    assert stored.cluster.n_clusters == 5


def test_ablate_rejects_bad_values_before_training(tmp_path, config_file, capsys):
    out = tmp_path / "bad"
    code = cli(
        ["ablate", "--config", str(config_file), "--param", "n_clusters"]
        + ["--values", "2,many", "--out", str(out)]
    )

    assert code == 2
    assert "n_clusters" in last_json(capsys.readouterr().err)["message"]
    assert not out.exists()


def test_ema_oracle():
    np.testing.assert_allclose(ema([1.0, 0.0, 0.0], 0.9), [1.0, 0.9, 0.81])


def test_ema_skips_missing_values():
    smoothed = ema([np.nan, 2.0, np.nan, 0.0], 0.5)

    assert np.isnan(smoothed[0])
    np.testing.assert_allclose(smoothed[1:], [2.0, 2.0, 1.0])


def test_windowed_mean_std():
    means, stds = windowed_mean_std([1.0, 3.0, 5.0, 7.0], window=2)

    np.testing.assert_allclose(means, [1.0, 2.0, 4.0, 6.0])
    np.testing.assert_allclose(stds, [0.0, 1.0, 1.0, 1.0])
    with pytest.raises(ConfigurationError):
        windowed_mean_std([1.0], window=0)
