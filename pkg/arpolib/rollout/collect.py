from typing import Protocol, Tuple

import numpy as np

from arpolib.rollout.batch import RolloutBatch
from arpolib.world.world import VectorWorld

__all__ = ["Actor", "sample_actions", "collect"]


class Actor(Protocol):
    def action_dist(self, images: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        :param images: (N, H, W, 3) observations.
        :return: (N, A) action probabilities and (N,) values.
        """
        ...


def sample_actions(probabilities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Inverse transform sampling, one uniform draw per row.
    One-hot rows always give their hot action.
    """
    cdf = np.cumsum(probabilities, axis=1)
    draws = rng.random(len(probabilities))
    actions = (draws[:, None] >= cdf).sum(axis=1)
    return np.minimum(actions, probabilities.shape[1] - 1).astype(np.int64)


def collect(
    policy: Actor,
    envs: VectorWorld,
    n_steps: int,
    rng: np.random.Generator,
) -> RolloutBatch:
    """
    Run the policy in every environment for n_steps steps.
    Environments continue from where the previous call left them.

    :param policy: Actor sampling the actions.
    :param envs: Vectorized environments, reset on first use.
    :param n_steps: Steps per environment.
    :param rng: Generator of the action draws.
    :return: Batch of exactly n_steps * len(envs) transitions,
        advantages and returns are left at zero.
    """
    if n_steps < 1:
        raise ValueError(f"Number of steps must be positive, got {n_steps}")
    if not envs.started:
        envs.reset()

    observations, actions, rewards, values = [], [], [], []
    action_dists, dones, style_ids, episode_returns = [], [], [], []
    for _ in range(n_steps):
        images = envs.images
        probabilities, step_values = policy.action_dist(images)
        step_actions = sample_actions(probabilities, rng)
        style_ids.append(envs.style_ids)
        result = envs.step(step_actions)

        observations.append(images)
        actions.append(step_actions)
        rewards.append(result.rewards)
        values.append(step_values)
        action_dists.append(probabilities)
        dones.append(result.dones)
        episode_returns.extend(result.finished_returns)
    _, last_values = policy.action_dist(envs.images)

    size = n_steps * len(envs)
    return RolloutBatch(
        observations=np.concatenate(observations).astype(np.float32),
        actions=np.concatenate(actions),
        rewards=np.concatenate(rewards).astype(np.float64),
        values=np.concatenate(values).astype(np.float64),
        action_dists=np.concatenate(action_dists).astype(np.float64),
        dones=np.concatenate(dones),
        advantages=np.zeros(size, dtype=np.float64),
        returns=np.zeros(size, dtype=np.float64),
        n_envs=len(envs),
        last_values=np.asarray(last_values, dtype=np.float64),
        style_ids=np.concatenate(style_ids),
        episode_returns=np.array(episode_returns, dtype=np.float64),
    )
