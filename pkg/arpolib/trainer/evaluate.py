from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from arpolib.policy.policy import PolicyModel
from arpolib.world.levels import build_split
from arpolib.world.world import make_env
from arpolib.world.world_base import LevelSpec, Observation, Split, WorldConfig

__all__ = ["EvaluationResult", "evaluate_actor", "evaluate_policy", "policy_actor"]

Actor = Callable[[Observation], int]


@dataclass
class EvaluationResult:
    """
    mean: mean episode return.
    std: standard deviation of the episode returns.
    returns: return of every episode.
    levels: level of every episode.
    """

    mean: float
    std: float
    returns: List[float]
    levels: List[LevelSpec]


def policy_actor(
    policy: PolicyModel, rng: np.random.Generator, greedy: bool = False
) -> Actor:
    """
    :return: Actor acting with the policy on the observation image only.
    """

    def act(observation: Observation) -> int:
        return int(policy.act(observation.image, rng, greedy)[0])

    return act


def evaluate_actor(
    actor_factory: Callable[[np.random.Generator], Actor],
    config: WorldConfig,
    split: Split,
    n_episodes: int,
    seed: int,
) -> EvaluationResult:
    """
    Run full episodes on levels drawn from the split.

    :param actor_factory: Builds the actor from the generator of its action draws.
    :param config: World configuration.
    :param split: Split the levels are drawn from.
    :param n_episodes: Number of episodes.
    :param seed: Seed of the level draws and the actor.
    """
    if n_episodes < 1:
        raise ValueError(f"Number of episodes must be positive, got {n_episodes}")
    level_rng = np.random.default_rng([seed, 0])
    actor = actor_factory(np.random.default_rng([seed, 1]))
    levels = build_split(config, split)
    env = make_env(config, split)

    returns, played = [], []
    for _ in range(n_episodes):
        level = levels[int(level_rng.integers(len(levels)))]
        observation = env.reset(level)
        episode_return, done = 0.0, False
        while not done:
            result = env.step(actor(observation))
            episode_return += result.reward
            observation, done = result.observation, result.done
        returns.append(episode_return)
        played.append(level)
    return EvaluationResult(
        mean=float(np.mean(returns)),
        std=float(np.std(returns)),
        returns=returns,
        levels=played,
    )


def evaluate_policy(
    policy: PolicyModel,
    config: WorldConfig,
    split: Split,
    n_episodes: int,
    seed: int,
    greedy: bool = False,
) -> Tuple[float, float]:
    """
    :return: Mean and standard deviation of the policy's episode returns.
    """
    result = evaluate_actor(
        lambda rng: policy_actor(policy, rng, greedy), config, split, n_episodes, seed
    )
    return result.mean, result.std
