import contextlib
import zlib
from typing import Dict, Iterator

import numpy as np
import torch

__all__ = ["STREAM_NAMES", "SeedStreams", "seeded_torch"]

# Every random decision of a run draws from one of these streams,
# so changing one component never shifts the others.
STREAM_NAMES = (
    "env",
    "action",
    "policy_init",
    "gan_init",
    "minibatch",
    "translate",
    "cluster",
    "augment",
    "eval",
)


class SeedStreams:
    """
    Named random sub-streams derived from a single root seed.

    :param root_seed: Root seed of the run.
    """

    def __init__(self, root_seed: int):
        if root_seed < 0:
            raise ValueError(f"Root seed must be non-negative, got {root_seed}")
        self._root_seed = int(root_seed)

    @property
    def root_seed(self) -> int:
        return self._root_seed

    def sequence(self, name: str) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            self._root_seed, spawn_key=(zlib.crc32(name.encode()),)
        )

    def seed(self, name: str) -> int:
        """
        :return: 63-bit integer seed of the stream.
        """
        return int(self.sequence(name).generate_state(1, dtype=np.uint64)[0]) >> 1

    def numpy(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self.sequence(name))

    def torch(self, name: str) -> torch.Generator:
        generator = torch.Generator()
        generator.manual_seed(self.seed(name))
        return generator

    def as_dict(self) -> Dict[str, int]:
        """
        :return: Seed record written into the run directory.
        """
        return {
            "root_seed": self._root_seed,
            **{name: self.seed(name) for name in STREAM_NAMES},
        }


@contextlib.contextmanager
def seeded_torch(seed: int) -> Iterator[None]:
    """
    Run the block with the global torch RNG seeded, restoring the previous
    state afterwards. Used around network construction.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield
