import dataclasses

import numba as nb
import numpy as np

from arpolib.internal.errors import DomainError
from arpolib.rollout.batch import RolloutBatch

__all__ = ["compute_advantages", "generalized_advantages"]


def generalized_advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_values: np.ndarray,
    gamma: float,
    lam: float,
) -> np.ndarray:
    """
    GAE(lambda) over time-major arrays.
    A terminal transition (done) neither bootstraps nor passes credit backwards.

    :param rewards: (T, N) rewards.
    :param values: (T, N) values of the observations.
    :param dones: (T, N) episode ended with the transition.
    :param last_values: (N,) values of the observations after step T - 1.
    :param gamma: Discount in (0, 1].
    :param lam: Trace decay in [0, 1].
    :return: (T, N) advantages.
    :raises DomainError: if gamma or lam are out of range.
    """
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"Discount gamma has to be in (0, 1], got {gamma}.")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"Trace decay lam has to be in [0, 1], got {lam}.")
    return _gae_kernel(
        np.ascontiguousarray(rewards, dtype=np.float64),
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(dones, dtype=np.bool_),
        np.ascontiguousarray(last_values, dtype=np.float64),
        float(gamma),
        float(lam),
    )


def compute_advantages(batch: RolloutBatch, gamma: float, lam: float) -> RolloutBatch:
    """
    :return: Copy of the batch with advantages and returns = advantages + values.
    """
    advantages = generalized_advantages(
        batch.time_major(batch.rewards),
        batch.time_major(batch.values),
        batch.time_major(batch.dones),
        batch.last_values,
        gamma,
        lam,
    ).reshape(-1)
    return dataclasses.replace(
        batch, advantages=advantages, returns=advantages + batch.values
    )


@nb.njit(cache=True)
def _gae_kernel(rewards, values, dones, last_values, gamma, lam):
    n_steps, n_envs = rewards.shape
    advantages = np.zeros((n_steps, n_envs), dtype=np.float64)
    for env in range(n_envs):
        running = 0.0
        next_value = last_values[env]
        for step in range(n_steps - 1, -1, -1):
            alive = 0.0 if dones[step, env] else 1.0
            delta = rewards[step, env] + gamma * next_value * alive - values[step, env]
            running = delta + gamma * lam * alive * running
            advantages[step, env] = running
            next_value = values[step, env]
    return advantages
