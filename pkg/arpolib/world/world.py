import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from gymnasium import spaces
from gymnasium.utils import seeding

from arpolib.internal.errors import EpisodeFinishedError, SplitViolationError
from arpolib.world.levels import Layout, LevelSampler, build_split, generate_layout
from arpolib.world.render import (
    CellCode,
    make_state_mask,
    make_style_table,
    render_observation,
)
from arpolib.world.world_base import (
    Action,
    LatentState,
    LevelSpec,
    Observation,
    Split,
    StepResult,
    WorldBase,
    WorldConfig,
)

__all__ = ["DistractorWorld", "make_env", "VectorStep", "VectorWorld"]

logger = logging.getLogger(__name__)


class DistractorWorld(WorldBase):
    """
    Grid navigation with visual distractors.
    The agent moves on a grid with walls towards a goal. Observations show
    the grid inside the state region of the frame and the level style inside
    the distractor region. Dynamics never depend on the style.

    :param config: World configuration.
    :param split: Split the handle is opened for.
    :param seed: Seed of the handle's level sampling generator.
    """

    def __init__(
        self,
        config: WorldConfig,
        split: Split = Split.TRAIN,
        seed: Optional[int] = None,
    ):
        super().__init__(config, split)
        self.action_space = spaces.Discrete(len(Action))
        self.observation_space = spaces.Box(
            0.0, 1.0, shape=config.observation_shape, dtype=np.float32
        )
        self.np_random, _ = seeding.np_random(seed)
        self._styles = make_style_table(config.n_styles)
        self._state_mask = make_state_mask(config.grid_size, config.cell_size)
        self._split_styles = frozenset(config.styles(split))
        self._split_levels: Optional[List[LevelSpec]] = None
        self._layouts: Dict[int, Layout] = {}

        self._level: Optional[LevelSpec] = None
        self._agent = (0, 0)
        self._episode_step = 0
        self._done = True

    @property
    def state_mask(self) -> np.ndarray:
        return self._state_mask

    @property
    def level(self) -> Optional[LevelSpec]:
        return self._level

    @property
    def layout(self) -> Layout:
        return self._layout_of(self._level)

    @property
    def done(self) -> bool:
        return self._done

    def sample_level(self) -> LevelSpec:
        """
        :return: Level drawn uniformly from the handle's split.
        """
        if self._split_levels is None:
            self._split_levels = build_split(self._config, self._split)
        return self._split_levels[int(self.np_random.integers(len(self._split_levels)))]

    def reset(self, level: LevelSpec) -> Observation:
        """
        Start a fresh episode on the level.
        :param level: Level whose style belongs to the handle's split.
        :raises SplitViolationError: if the style is outside the split.
        """
        if level.style_id not in self._split_styles:
            raise SplitViolationError(
                f"Style {level.style_id} does not belong to the {self._split.value} split."
            )
        self._level = level
        self._agent = self._layout_of(level).start
        self._episode_step = 0
        self._done = False
        logger.debug(f"Reset on {level} in the {self._split.value} split")
        return self._observe()

    def step(self, action: int) -> StepResult:
        """
        :param action: Action id, see ``Action``.
        :raises EpisodeFinishedError: if the episode is over.
        :raises ValueError: if the action is not in the action set.
        """
        if self._done:
            raise EpisodeFinishedError(
                "Cannot step a finished episode, reset the environment first."
            )
        if not self.action_space.contains(int(action)):
            raise ValueError(f"Action {action} is not in the action set {list(Action)}.")

        layout = self._layout_of(self._level)
        self._agent = layout.move(self._agent, int(action))
        self._episode_step += 1

        reached_goal = self._agent == layout.goal
        reward = self._config.goal_reward if reached_goal else self._config.step_cost
        self._done = reached_goal or self._episode_step >= self._config.horizon
        if self._done:
            logger.debug(
                f"Episode on {self._level} finished after {self._episode_step} steps, "
                f"goal reached: {reached_goal}"
            )
        return StepResult(
            observation=self._observe(),
            reward=float(reward),
            done=self._done,
            info={
                "level": self._level,
                "episode_step": self._episode_step,
                "reached_goal": reached_goal,
            },
        )

    def state_dict(self) -> Dict[str, Any]:
        return {
            "level": None if self._level is None else self._level.to_dict(),
            "agent": self._agent,
            "episode_step": self._episode_step,
            "done": self._done,
            "np_random": self.np_random.bit_generator.state,
        }

    def load_state_dict(self, state: Dict[str, Any]):
        self._level = None if state["level"] is None else LevelSpec(**state["level"])
        self._agent = tuple(state["agent"])
        self._episode_step = int(state["episode_step"])
        self._done = bool(state["done"])
        self.np_random.bit_generator.state = state["np_random"]

    def observe(self) -> Observation:
        """
        :return: Observation of the current state.
        """
        return self._observe()

    def _layout_of(self, level: LevelSpec) -> Layout:
        if level.layout_seed not in self._layouts:
            self._layouts[level.layout_seed] = generate_layout(
                level.layout_seed, self._config
            )
        return self._layouts[level.layout_seed]

    def _observe(self) -> Observation:
        layout = self._layout_of(self._level)
        cells = np.where(layout.walls, CellCode.WALL, CellCode.EMPTY)
        cells[layout.goal] = CellCode.GOAL
        cells[self._agent] = CellCode.AGENT
        frame = self._level.dynamic_phase + (
            self._episode_step if self._config.animate else 0
        )
        image = render_observation(
            cells, self._config.cell_size, self._styles, self._level.style_id, frame
        )
        return Observation(image, LatentState(agent=self._agent, goal=layout.goal))


def make_env(
    config: WorldConfig,
    split: Split = Split.TRAIN,
    seed: Optional[int] = None,
) -> DistractorWorld:
    """
    :param config: Validated world configuration.
    :param split: Split the handle is opened for.
    :param seed: Seed of the handle's level sampling.
    :return: Environment handle.
    """
    return DistractorWorld(config, split, seed)


@dataclass
class VectorStep:
    """
    Result of stepping every environment once.
    Observations of finished environments are already the reset observations.

    images: (N, H, W, 3) next observations.
    rewards: (N,) rewards.
    dones: (N,) episode ended with this step.
    style_ids: (N,) styles of the next observations.
    finished_returns: returns of episodes finished with this step, by env index.
    finished_lengths: lengths of those episodes.
    """

    images: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    style_ids: np.ndarray
    finished_returns: List[float]
    finished_lengths: List[int]


class VectorWorld:
    """
    N independent environments of one split stepped from a single thread.
    Finished environments are reset immediately with levels drawn from the split.

    :param config: World configuration.
    :param split: Split of every environment.
    :param n_envs: Number of environments.
    :param rng: Generator driving level sampling.
    """

    def __init__(
        self,
        config: WorldConfig,
        split: Split,
        n_envs: int,
        rng: np.random.Generator,
    ):
        if n_envs < 1:
            raise ValueError(f"Number of environments must be positive, got {n_envs}")
        self._config = config
        self._envs = [make_env(config, split) for _ in range(n_envs)]
        self._sampler = LevelSampler(build_split(config, split), rng)
        self._observations: List[Optional[Observation]] = [None] * n_envs
        self._returns = np.zeros(n_envs, dtype=np.float64)
        self._lengths = np.zeros(n_envs, dtype=np.int64)

    def __len__(self) -> int:
        return len(self._envs)

    @property
    def envs(self) -> Sequence[DistractorWorld]:
        return self._envs

    @property
    def observations(self) -> List[Observation]:
        return list(self._observations)

    @property
    def images(self) -> np.ndarray:
        return np.stack([observation.image for observation in self._observations])

    @property
    def style_ids(self) -> np.ndarray:
        return np.array([env.level.style_id for env in self._envs], dtype=np.int64)

    @property
    def started(self) -> bool:
        return all(observation is not None for observation in self._observations)

    def reset(self) -> np.ndarray:
        """
        Reset every environment on a freshly sampled level.
        :return: (N, H, W, 3) initial observations.
        """
        for index, env in enumerate(self._envs):
            self._observations[index] = env.reset(self._sampler.sample())
        self._returns[:] = 0.0
        self._lengths[:] = 0
        return self.images

    def step(self, actions: Sequence[int]) -> VectorStep:
        """
        :param actions: One action per environment.
        """
        if len(actions) != len(self._envs):
            raise ValueError(
                f"Expected {len(self._envs)} actions, got {len(actions)}"
            )
        rewards = np.zeros(len(self._envs), dtype=np.float64)
        dones = np.zeros(len(self._envs), dtype=bool)
        finished_returns, finished_lengths = [], []
        for index, (env, action) in enumerate(zip(self._envs, actions)):
            result = env.step(int(action))
            rewards[index] = result.reward
            dones[index] = result.done
            self._returns[index] += result.reward
            self._lengths[index] += 1
            if result.done:
                finished_returns.append(float(self._returns[index]))
                finished_lengths.append(int(self._lengths[index]))
                self._returns[index] = 0.0
                self._lengths[index] = 0
                self._observations[index] = env.reset(self._sampler.sample())
            else:
                self._observations[index] = result.observation
        return VectorStep(
            images=self.images,
            rewards=rewards,
            dones=dones,
            style_ids=self.style_ids,
            finished_returns=finished_returns,
            finished_lengths=finished_lengths,
        )

    def state_dict(self) -> Dict[str, Any]:
        return {
            "envs": [env.state_dict() for env in self._envs],
            "sampler": self._sampler.rng.bit_generator.state,
            "returns": self._returns.copy(),
            "lengths": self._lengths.copy(),
        }

    def load_state_dict(self, state: Dict[str, Any]):
        for index, (env, env_state) in enumerate(zip(self._envs, state["envs"])):
            env.load_state_dict(env_state)
            self._observations[index] = None if env.level is None else env.observe()
        self._sampler.rng.bit_generator.state = state["sampler"]
        self._returns = np.array(state["returns"], dtype=np.float64)
        self._lengths = np.array(state["lengths"], dtype=np.int64)
