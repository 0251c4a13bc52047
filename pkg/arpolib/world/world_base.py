from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import yaml

from arpolib.internal.errors import ConfigurationError
from arpolib.internal.image import Image

__all__ = [
    "Action",
    "Split",
    "WorldConfig",
    "LevelSpec",
    "LatentState",
    "Observation",
    "StepResult",
    "WorldBase",
    "load_world_config",
]


class Action(IntEnum):
    """
    Discrete action set: no-op and four moves.
    """

    NOOP = 0
    UP = 1
    RIGHT = 2
    DOWN = 3
    LEFT = 4


class Split(Enum):
    """
    Level distribution an environment is opened for:
    1. TRAIN - the fixed set of training levels
    2. TEST - held-out styles over fresh layouts
    """

    TRAIN = "train"
    TEST = "test"


@dataclass
class WorldConfig:
    """
    Config for the distractor world

    n_styles: number of distractor styles.
    grid_size: side of the square navigation grid in cells.
    image_size: side of the rendered observation in pixels, a multiple of grid_size.
    horizon: maximum number of steps in an episode.
    train_styles: styles the train split is built from.
    test_styles: held-out styles of the test split, disjoint from train_styles.
    n_train_layouts: number of layouts in the fixed train split.
    n_test_levels: size of the test level pool, built over fresh layouts.
    wall_density: probability of a cell being a wall.
    step_cost: reward of every step which does not reach the goal.
    goal_reward: reward for reaching the goal.
    animate: animated distractor pattern advances every step.
    max_dynamic_phase: dynamic phases of levels are drawn from [0, max_dynamic_phase).
    """

    n_styles: int = 20
    grid_size: int = 8
    image_size: int = 32
    horizon: int = 32
    train_styles: List[int] = field(default_factory=lambda: list(range(16)))
    test_styles: List[int] = field(default_factory=lambda: list(range(16, 20)))
    n_train_layouts: int = 64
    n_test_levels: int = 1024
    wall_density: float = 0.15
    step_cost: float = -0.01
    goal_reward: float = 1.0
    animate: bool = True
    max_dynamic_phase: int = 64

    def __post_init__(self):
        """
        :raises ConfigurationError: if the config describes an impossible world
            or the train and test styles overlap.
        """
        self.train_styles = [int(style) for style in self.train_styles]
        self.test_styles = [int(style) for style in self.test_styles]
        if self.n_styles < 2:
            raise ConfigurationError(
                f"The world needs at least 2 styles, got n_styles={self.n_styles}."
            )
        if self.grid_size < 2:
            raise ConfigurationError(
                f"Grid size has to be at least 2, got {self.grid_size}."
            )
        if self.image_size % self.grid_size != 0 or self.cell_size < 2:
            raise ConfigurationError(
                f"Image size {self.image_size} has to be a multiple of grid size "
                f"{self.grid_size} with cells of at least 2 pixels."
            )
        if self.horizon < 1:
            raise ConfigurationError(f"Horizon has to be positive, got {self.horizon}.")
        if not self.train_styles or not self.test_styles:
            raise ConfigurationError("Both train and test styles have to be non-empty.")
        for style in self.train_styles + self.test_styles:
            if not 0 <= style < self.n_styles:
                raise ConfigurationError(
                    f"Style {style} is outside of [0, {self.n_styles})."
                )
        overlap = sorted(set(self.train_styles) & set(self.test_styles))
        if overlap:
            raise ConfigurationError(
                f"Train and test styles have to be disjoint, both contain {overlap}."
            )
        if self.n_train_layouts < 1 or self.n_test_levels < 1:
            raise ConfigurationError("Splits have to contain at least one level.")
        if not 0.0 <= self.wall_density < 1.0:
            raise ConfigurationError(
                f"Wall density has to be in [0, 1), got {self.wall_density}."
            )
        if self.goal_reward <= self.step_cost:
            raise ConfigurationError("Goal reward has to exceed the step cost.")
        if self.max_dynamic_phase < 1:
            raise ConfigurationError("max_dynamic_phase has to be positive.")

    @property
    def cell_size(self) -> int:
        return self.image_size // self.grid_size

    @property
    def reward_range(self) -> Tuple[float, float]:
        """
        :return: (r_min, r_max) bounding every reward of the world.
        """
        return float(self.step_cost), float(self.goal_reward)

    @property
    def observation_shape(self) -> Tuple[int, int, int]:
        return self.image_size, self.image_size, 3

    def styles(self, split: "Split") -> List[int]:
        return self.train_styles if split is Split.TRAIN else self.test_styles


def load_world_config(path: Union[str, Path]) -> WorldConfig:
    """
    :param path: YAML file with WorldConfig fields as keys.
    :return: Validated WorldConfig.
    """
    with open(path) as f:
        values = yaml.safe_load(f) or {}
    try:
        return WorldConfig(**values)
    except TypeError as e:
        raise ConfigurationError(f"Invalid world config {path}: {e}") from e


@dataclass(frozen=True)
class LevelSpec:
    """
    A procedurally generated level.

    layout_seed: determines walls, start and goal.
    style_id: distractor style of every observation.
    dynamic_phase: frame offset of the animated distractor.
    """

    layout_seed: int
    style_id: int
    dynamic_phase: int = 0

    def __post_init__(self):
        if self.layout_seed < 0 or self.style_id < 0 or self.dynamic_phase < 0:
            raise ConfigurationError(f"Level fields have to be non-negative: {self}.")

    def to_dict(self) -> Dict[str, int]:
        return {
            "layout_seed": self.layout_seed,
            "style_id": self.style_id,
            "dynamic_phase": self.dynamic_phase,
        }


@dataclass(frozen=True)
class LatentState:
    """
    True state of the world, hidden from agents.
    Positions are (row, column) cells.
    """

    agent: Tuple[int, int]
    goal: Tuple[int, int]


@dataclass
class Observation:
    image: Image
    latent_state: LatentState


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: Dict[str, Any]


class WorldBase(ABC):
    """
    Environment handle opened for a single split.

    :param config: World configuration.
    :param split: Split whose levels may be reset to.
    """

    def __init__(self, config: WorldConfig, split: Split):
        self._config = config
        self._split = split

    @property
    def config(self) -> WorldConfig:
        return self._config

    @property
    def split(self) -> Split:
        return self._split

    @abstractmethod
    def reset(self, level: LevelSpec) -> Observation:
        """
        Start a fresh episode on the level.
        :param level: Level of the handle's split.
        :return: Initial observation.
        """
        pass

    @abstractmethod
    def step(self, action: int) -> StepResult:
        """
        :param action: Action id, see ``Action``.
        :return: Result of the transition.
        """
        pass

    @property
    @abstractmethod
    def state_mask(self) -> np.ndarray:
        """
        :return: Boolean (H, W) mask of pixels which depend on the latent state.
        """
        pass

    @property
    def distractor_mask(self) -> np.ndarray:
        """
        :return: Boolean (H, W) mask of pixels which depend on the style only.
        """
        return ~self.state_mask
