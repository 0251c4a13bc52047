import csv
import json
import math

import numpy as np
import pytest
import torch

import arpolib.trainer.trainer as trainer_module
from arpolib.cluster import ClusterConfig
from arpolib.internal.errors import ClusteringError, NonFiniteLossError
from arpolib.internal.modules import parameter_digest
from arpolib.policy import PolicyConfig, PolicyModel
from arpolib.trainer import (
    METRIC_COLUMNS,
    Algo,
    Trainer,
    evaluate,
    evaluate_actor,
    train,
)
from arpolib.world import (
    STATE_COLORS,
    CellCode,
    Layout,
    Split,
    shortest_path,
)


def read_metrics(run_dir):
    with open(run_dir / "metrics.csv", newline="") as f:
        return list(csv.DictReader(f))


def test_run_records_strictly_increasing_counters(tmp_path, make_train_config):
    config = make_train_config(algo=Algo.ARPO, eval_interval=2)
    state = train(config, tmp_path / "run")

    rows = read_metrics(tmp_path / "run")
    assert [int(row["iteration"]) for row in rows] == [1, 2, 3]
    assert [int(row["timesteps"]) for row in rows] == [32, 64, 96]
    assert list(rows[0]) == METRIC_COLUMNS
    assert state.iteration == 3 and state.timesteps == 96
    assert state.cluster_model is not None and state.translator is not None
    assert math.isnan(float(rows[0]["eval_test_mean"]))
    assert math.isfinite(float(rows[1]["eval_test_mean"]))
    assert math.isfinite(float(rows[2]["eval_train_mean"]))
    assert math.isfinite(float(rows[2]["gan_g_total"]))

    for name in ["config.yaml", "seeds.json", "levels_train.json", "levels_test.json"]:
        assert (tmp_path / "run" / name).exists()
    for name in ["policy.pt", "cluster.npz", "translator.pt", "progress.pt"]:
        assert (tmp_path / "run" / "checkpoints" / name).exists()
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["status"] == "finished"
    assert summary["n_clusters"] == 2
    assert json.loads((tmp_path / "run" / "seeds.json").read_text())["root_seed"] == 0


@pytest.mark.parametrize("algo", list(Algo))
def test_same_seed_gives_identical_metrics(tmp_path, make_train_config, algo):
    config = make_train_config(algo=algo, seed=4)
    train(config, tmp_path / "first")
    train(config, tmp_path / "second")

    first = (tmp_path / "first" / "metrics.csv").read_bytes()
    assert first == (tmp_path / "second" / "metrics.csv").read_bytes()


def test_ppo_has_no_translator(make_train_config):
    state = train(make_train_config(algo=Algo.PPO))

    assert state.translator is None and state.cluster_model is None
    assert all(math.isnan(row["gan_g_total"]) for row in state.history)


def test_zero_beta_reproduces_ppo(make_train_config):
    zero_beta = PolicyConfig(minibatch_size=16, num_sgd_iter=2, beta1=0.0)
    arpo = train(make_train_config(algo=Algo.ARPO, policy=zero_beta))
    ppo = train(make_train_config(algo=Algo.PPO, policy=zero_beta))

    assert arpo.translator is not None
    assert parameter_digest(arpo.policy.network) == parameter_digest(ppo.policy.network)
    for arpo_row, ppo_row in zip(arpo.history, ppo.history):
        assert arpo_row["total"] == ppo_row["total"]
        assert arpo_row["train_return"] == ppo_row["train_return"] or (
            math.isnan(arpo_row["train_return"]) and math.isnan(ppo_row["train_return"])
        )


def test_state_only_policy_ignores_distractor_translation(
    make_train_config, masked_policy_net, distractor_shift_generator
):
    config = make_train_config(algo=Algo.ARPO)
    trainer = Trainer(config)
    trainer.state.policy = PolicyModel(masked_policy_net, config.policy)

    trainer.step()
    translator = trainer.state.translator
    assert translator.n_domains == 2
    translator.generator = distractor_shift_generator
    translator.g_optimizer = torch.optim.Adam(distractor_shift_generator.parameters())

    row = trainer.step()
    assert row["adv_kl"] == 0.0
    assert row["gan_policy_kl"] == 0.0


def test_resume_matches_uninterrupted_run(tmp_path, make_train_config):
    config = make_train_config(algo=Algo.ARPO, seed=2)
    train(config, tmp_path / "full")

    interrupted = Trainer(config, tmp_path / "resumed")
    interrupted.step()
    interrupted.checkpoint()
    # Rows after the last checkpoint are dropped on resume.
    interrupted.step()
    state = train(config, tmp_path / "resumed", resume=True)

    assert state.iteration == 3
    full = (tmp_path / "full" / "metrics.csv").read_bytes()
    assert full == (tmp_path / "resumed" / "metrics.csv").read_bytes()


def test_non_finite_loss_aborts_with_checkpoint(tmp_path, make_train_config, monkeypatch):
    calls = []

    def failing_step(model, batch, translated, rng):
        calls.append(1)
        raise NonFiniteLossError("loss is nan", {"total": float("nan")})

    monkeypatch.setattr(trainer_module, "policy_step", failing_step)
    with pytest.raises(NonFiniteLossError):
        train(make_train_config(), tmp_path / "run")

    assert calls == [1]
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["status"] == "aborted"
    assert "total" in summary["diagnostics"]
    assert (tmp_path / "run" / "checkpoints" / "progress.pt").exists()


def test_abort_keeps_last_iteration(tmp_path, make_train_config, monkeypatch):
    config = make_train_config(algo=Algo.ARPO, seed=4)
    reference = Trainer(config)
    reference.step()
    policy_step = trainer_module.policy_step
    calls = []

    def step_then_diverge(model, batch, translated, rng):
        calls.append(1)
        if len(calls) == 1:
            return policy_step(model, batch, translated, rng)
        with torch.no_grad():
            for parameter in model.network.parameters():
                parameter.add_(1.0)
        raise NonFiniteLossError("loss is nan", {"total": float("nan")})

    monkeypatch.setattr(trainer_module, "policy_step", step_then_diverge)
    with pytest.raises(NonFiniteLossError):
        train(config, tmp_path / "run")

    checkpoints = tmp_path / "run" / "checkpoints"
    restored = PolicyModel.build(config.world.image_size, config.policy, n_actions=5)
    restored.restore(checkpoints / "policy.pt")
    assert parameter_digest(restored.network) == parameter_digest(
        reference.state.policy.network
    )
    progress = torch.load(str(checkpoints / "progress.pt"), weights_only=False)
    assert progress["iteration"] == 1
    assert len(read_metrics(tmp_path / "run")) == 1


def test_single_cluster_is_rejected(make_train_config):
    config = make_train_config(
        algo=Algo.ARPO, cluster=ClusterConfig(n_clusters=1, n_init=2)
    )
    with pytest.raises(ClusteringError):
        train(config)


def _oracle_factory(config):
    cell_size = config.cell_size

    def factory(rng):
        def act(observation):
            center = cell_size // 2
            centers = observation.image[center::cell_size, center::cell_size]
            walls = np.all(np.isclose(centers, STATE_COLORS[CellCode.WALL]), axis=2)
            latent = observation.latent_state
            path = shortest_path(Layout(walls, latent.agent, latent.goal))
            return path[0] if path else 0

        return act

    return factory


def _uniform_factory(rng):
    return lambda observation: int(rng.integers(5))


def test_oracle_beats_uniform_actor(small_world_config):
    for split in Split:
        oracle = evaluate_actor(
            _oracle_factory(small_world_config), small_world_config, split, 8, seed=0
        )
        uniform = evaluate_actor(_uniform_factory, small_world_config, split, 8, seed=0)

        assert oracle.levels == uniform.levels
        assert oracle.mean > uniform.mean
        assert max(oracle.returns) > 0.9


def test_evaluation_is_seeded(make_train_config):
    state = train(make_train_config())

    first = evaluate(state, Split.TEST, 3, seed=1)
    assert first == evaluate(state, Split.TEST, 3, seed=1)
    assert evaluate(state, Split.TRAIN, 3, seed=1, greedy=True)[0] <= 1.0


def test_adversarial_divergence_starts_near_zero(make_train_config):
    config = make_train_config(algo=Algo.ARPO, seed=5, total_timesteps=32)
    state = train(config)

    (row,) = state.history
    assert 0.0 <= row["adv_kl"] < 0.05
    assert state.translator is not None
