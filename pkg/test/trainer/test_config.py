import pytest

from arpolib.internal.errors import ConfigurationError
from arpolib.trainer import (
    Algo,
    TrainConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
)


def test_config_round_trip(tmp_path, make_train_config):
    config = make_train_config(algo=Algo.ARPO, seed=3)
    save_config(config, tmp_path / "config.yaml")

    assert load_config(tmp_path / "config.yaml") == config


def test_defaults_fill_missing_keys():
    config = config_from_dict(TrainConfig, {"algo": "ppo", "policy": {"lr": 1e-3}})

    assert config.algo is Algo.PPO
    assert config.policy.lr == 1e-3
    assert config.policy.clip == 0.2
    assert config.translator == TrainConfig().translator


def test_translator_betas_survive_yaml(tmp_path):
    config = TrainConfig()
    save_config(config, tmp_path / "config.yaml")

    assert load_config(tmp_path / "config.yaml").translator.betas == (0.5, 0.999)
    assert config_to_dict(config)["translator"]["betas"] == [0.5, 0.999]


@pytest.mark.parametrize(
    "values",
    [
        {"learning_rate": 1e-3},
        {"policy": {"learning_rate": 1e-3}},
        {"algo": "sac"},
        {"n_envs": 0},
        {"world": {"train_styles": [0, 1], "test_styles": [1, 2]}},
        {"policy": "fast"},
    ],
)
def test_invalid_configs_are_rejected(values):
    with pytest.raises(ConfigurationError):
        config_from_dict(TrainConfig, values)


def test_unknown_key_names_full_path():
    with pytest.raises(ConfigurationError, match="policy.learning_rate"):
        config_from_dict(TrainConfig, {"policy": {"learning_rate": 1e-3}})


def test_overrides_are_parsed_as_yaml():
    config = apply_overrides(
        TrainConfig(),
        ["algo=ppo_cutout", "policy.lr=0.001", "world.animate=false", "seed=7"],
    )

    assert config.algo is Algo.PPO_CUTOUT
    assert config.policy.lr == 0.001
    assert config.world.animate is False
    assert config.seed == 7


def test_alias_sets_every_field():
    config = apply_overrides(TrainConfig(), ["beta=0", "n_clusters=4"])

    assert config.policy.beta1 == 0
    assert config.translator.beta2 == 0
    assert config.cluster.n_clusters == 4


@pytest.mark.parametrize(
    "override", ["seed", "=3", "policy.momentum=0.9", "seed.x=1", "n_envs=four"]
)
def test_bad_overrides_are_rejected(override):
    with pytest.raises(ConfigurationError):
        apply_overrides(TrainConfig(), [override])


def test_iteration_count_rounds_up(make_train_config):
    config = make_train_config(total_timesteps=100)

    assert config.batch_size == 32
    assert config.n_iterations == 4


def test_scalars_take_the_type_of_their_field():
    config = config_from_dict(
        TrainConfig, {"seed": "3", "policy": {"lr": "1e-3", "beta1": 5}}
    )

    assert config.seed == 3 and isinstance(config.seed, int)
    assert config.policy.lr == 0.001
    assert isinstance(config.policy.beta1, float)
    assert apply_overrides(TrainConfig(), ["beta=0"]).translator.beta2 == 0.0
