from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Union

import numpy as np

from arpolib.internal.errors import (
    CheckpointError,
    DomainError,
    NumericGuardError,
    ShapeError,
)

__all__ = ["RolloutBatch", "save_batch", "load_batch"]

BATCH_FORMAT_VERSION = 1
SIMPLEX_TOLERANCE = 1e-6


@dataclass
class RolloutBatch:
    """
    Transitions of n_envs environments over n_steps steps, flattened time-major:
    transition (t, e) is stored at index t * n_envs + e.

    observations: (T*N, H, W, 3) images the actions were taken on.
    actions: (T*N,) sampled action ids.
    rewards: (T*N,) rewards.
    values: (T*N,) value estimates of the observations.
    action_dists: (T*N, A) behaviour policy distributions.
    dones: (T*N,) episode ended with the transition.
    advantages: (T*N,) advantage estimates, zero until computed.
    returns: (T*N,) value targets, zero until computed.
    n_envs: number of environments.
    last_values: (N,) value estimates of the observations after the last step.
    style_ids: (T*N,) styles of the observations.
    episode_returns: returns of the episodes finished during collection.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    action_dists: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    n_envs: int
    last_values: np.ndarray
    style_ids: np.ndarray
    episode_returns: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def n_steps(self) -> int:
        return len(self) // self.n_envs

    def validate(self) -> "RolloutBatch":
        """
        :raises ShapeError: if per-transition arrays differ in length.
        :raises DomainError: if a stored distribution is not a simplex.
        :raises NumericGuardError: if advantages are not finite.
        """
        per_transition = [
            self.observations,
            self.actions,
            self.rewards,
            self.values,
            self.action_dists,
            self.dones,
            self.advantages,
            self.returns,
            self.style_ids,
        ]
        lengths = {len(array) for array in per_transition}
        if len(lengths) != 1:
            raise ShapeError(f"Batch arrays have different lengths {sorted(lengths)}.")
        if len(self) % self.n_envs != 0 or len(self.last_values) != self.n_envs:
            raise ShapeError(
                f"Batch of {len(self)} transitions does not fit {self.n_envs} environments."
            )
        if np.any(self.action_dists < 0) or np.any(
            np.abs(self.action_dists.sum(axis=1) - 1.0) > SIMPLEX_TOLERANCE
        ):
            raise DomainError("Stored action distributions have to sum to 1.")
        if not np.all(np.isfinite(self.advantages)):
            raise NumericGuardError("Advantages contain non-finite values.")
        return self

    def time_major(self, array: np.ndarray) -> np.ndarray:
        """
        :return: View of a per-transition array with shape (T, N, ...).
        """
        return array.reshape(self.n_steps, self.n_envs, *array.shape[1:])


def save_batch(batch: RolloutBatch, path: Union[str, Path]):
    np.savez(
        path,
        format_version=BATCH_FORMAT_VERSION,
        **{f.name: np.asarray(getattr(batch, f.name)) for f in fields(batch)},
    )


def load_batch(path: Union[str, Path]) -> RolloutBatch:
    """
    :raises CheckpointError: if the file has another format version.
    """
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != BATCH_FORMAT_VERSION:
            raise CheckpointError(
                f"Batch file {path} has format version {version}, "
                f"this library reads version {BATCH_FORMAT_VERSION}."
            )
        values = {f.name: data[f.name] for f in fields(RolloutBatch)}
    values["n_envs"] = int(values["n_envs"])
    return RolloutBatch(**values)
