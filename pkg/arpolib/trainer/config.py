import dataclasses
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Union

import yaml

from arpolib.cluster.extractor import ExtractorConfig
from arpolib.cluster.gmm import ClusterConfig
from arpolib.internal.errors import ConfigurationError
from arpolib.policy.policy import PolicyConfig
from arpolib.translator.pair import TranslatorConfig
from arpolib.world.world_base import WorldConfig

__all__ = [
    "Algo",
    "TrainConfig",
    "ALIASES",
    "config_to_dict",
    "config_from_dict",
    "load_config",
    "save_config",
    "apply_overrides",
]


class Algo(Enum):
    """
    Training algorithm:
    1. ARPO - PPO regularised against an adversarial style translator
    2. PPO - plain PPO
    3. PPO_CUTOUT - PPO on observations augmented with random color cutouts
    """

    ARPO = "arpo"
    PPO = "ppo"
    PPO_CUTOUT = "ppo_cutout"


@dataclass
class TrainConfig:
    """
    Config of a training run. Component configs are nested and
    forwarded to the components unchanged.

    algo: training algorithm.
    seed: root seed of every random stream of the run.
    total_timesteps: environment steps of the run.
    n_envs: number of parallel environments.
    n_steps: rollout length per environment and iteration.
    warmup_observations: observations the style clusters are fitted on.
    eval_interval: iterations between evaluations, 0 disables them.
    eval_episodes: episodes per split and evaluation.
    greedy_eval: evaluate the most probable action instead of sampling.
    checkpoint_interval: iterations between checkpoints, 0 checkpoints at the end only.
    cutout_min_area: minimal cutout area as a fraction of the frame.
    cutout_max_area: maximal cutout area as a fraction of the frame.
    world: environment config.
    policy: policy and PPO config.
    translator: translator config.
    cluster: mixture config.
    extractor: feature extractor config.
    """

    algo: Algo = Algo.ARPO
    seed: int = 0
    total_timesteps: int = 500_000
    n_envs: int = 16
    n_steps: int = 256
    warmup_observations: int = 4096
    eval_interval: int = 10
    eval_episodes: int = 10
    greedy_eval: bool = False
    checkpoint_interval: int = 10
    cutout_min_area: float = 0.05
    cutout_max_area: float = 0.30
    world: WorldConfig = field(default_factory=WorldConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    translator: TranslatorConfig = field(default_factory=TranslatorConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)

    def __post_init__(self):
        """
        :raises ConfigurationError: if the run cannot be carried out.
        """
        try:
            self.algo = Algo(self.algo)
        except ValueError as e:
            raise ConfigurationError(
                f"Unknown algorithm {self.algo!r}, expected one of "
                f"{[algo.value for algo in Algo]}."
            ) from e
        if self.seed < 0:
            raise ConfigurationError(f"Seed has to be non-negative, got {self.seed}.")
        positive = (
            "total_timesteps",
            "n_envs",
            "n_steps",
            "warmup_observations",
            "eval_episodes",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigurationError(
                    f"{name} has to be positive, got {getattr(self, name)}."
                )
        if self.eval_interval < 0 or self.checkpoint_interval < 0:
            raise ConfigurationError("Intervals cannot be negative.")
        if not 0.0 < self.cutout_min_area <= self.cutout_max_area <= 1.0:
            raise ConfigurationError(
                f"Cutout area bounds have to satisfy 0 < min <= max <= 1, "
                f"got [{self.cutout_min_area}, {self.cutout_max_area}]."
            )

    @property
    def batch_size(self) -> int:
        return self.n_envs * self.n_steps

    @property
    def n_iterations(self) -> int:
        return -(-self.total_timesteps // self.batch_size)


# Shortcuts used by ablations, each one sets every listed field.
ALIASES = {
    "beta": ("policy.beta1", "translator.beta2"),
    "n_clusters": ("cluster.n_clusters",),
}


def config_to_dict(config) -> Dict[str, Any]:
    """
    :return: Plain dict of the dataclass config, enums by value, tuples as lists.
    """
    values = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            value = config_to_dict(value)
        elif isinstance(value, Enum):
            value = value.value
        elif isinstance(value, tuple):
            value = list(value)
        values[f.name] = value
    return values


def config_from_dict(cls, values: Dict[str, Any], path: str = ""):
    """
    Build a dataclass config from a nested dict, missing keys take defaults.
    :raises ConfigurationError: on unknown keys or invalid values.
    """
    if not isinstance(values, dict):
        raise ConfigurationError(f"Config section {path or '<root>'} has to be a mapping.")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigurationError(
            f"Unknown config keys {[path + key for key in unknown]}."
        )
    kwargs = {}
    for name, value in values.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            value = config_from_dict(hint, value or {}, f"{path}{name}.")
        else:
            value = _coerce(hint, value, path + name)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(f"Invalid config section {path or '<root>'}: {e}") from e


def _coerce(hint, value: Any, path: str) -> Any:
    """
    Cast scalars to the numeric type of their field, e.g. command line strings
    or integers given for float fields.
    """
    if hint is float and isinstance(value, (int, str)) and not isinstance(value, bool):
        caster = float
    elif hint is int and isinstance(value, str):
        caster = int
    else:
        return value
    try:
        return caster(value)
    except ValueError as e:
        raise ConfigurationError(
            f"Config field {path} expects {hint.__name__}, got {value!r}."
        ) from e


def load_config(path: Union[str, Path]) -> TrainConfig:
    """
    :param path: YAML file with TrainConfig fields, component configs as nested mappings.
    """
    with open(path) as f:
        values = yaml.safe_load(f) or {}
    return config_from_dict(TrainConfig, values)


def save_config(config: TrainConfig, path: Union[str, Path]):
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=False)


def apply_overrides(config: TrainConfig, overrides: Iterable[str]) -> TrainConfig:
    """
    :param config: Base config.
    :param overrides: ``dotted.path=value`` strings, values parsed as YAML.
        The keys of ``ALIASES`` expand to all their fields.
    :return: New validated config.
    """
    values = config_to_dict(config)
    for override in overrides:
        key, separator, raw = override.partition("=")
        if not separator or not key:
            raise ConfigurationError(
                f"Override {override!r} has to look like dotted.path=value."
            )
        value = yaml.safe_load(raw)
        for target in ALIASES.get(key.strip(), (key.strip(),)):
            *sections, name = target.split(".")
            section = values
            for part in sections:
                if not isinstance(section.get(part), dict):
                    raise ConfigurationError(
                        f"Unknown config section {part!r} in {target!r}."
                    )
                section = section[part]
            if name not in section:
                raise ConfigurationError(f"Unknown config key {target!r}.")
            section[name] = value
    return config_from_dict(TrainConfig, values)
