"""
This file contains interface classes which represent
certain features of the objects.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Union

import torch

from arpolib.internal.errors import CheckpointError

__all__ = ["Checkpointable"]


class Checkpointable(ABC):
    """
    This class represents the fact that the object can be saved to
    and restored from a versioned checkpoint file.
    Subclasses define ``_checkpoint_kind`` and ``_format_version``,
    a file written by another kind or version is refused on load.
    """

    _checkpoint_kind = "checkpoint"
    _format_version = 1

    @abstractmethod
    def state_dict(self) -> Dict[str, Any]:
        pass

    @abstractmethod
    def load_state_dict(self, state: Dict[str, Any]):
        pass

    def save(self, path: Union[str, Path]):
        """
        :param path: Destination file.
        """
        torch.save(
            {
                "kind": self._checkpoint_kind,
                "format_version": self._format_version,
                "state": self.state_dict(),
            },
            str(path),
        )

    def restore(self, path: Union[str, Path]):
        """
        :param path: File written by ``save``.
        :raises CheckpointError: if the file is of another kind or format version.
        """
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
        if payload.get("kind") != self._checkpoint_kind:
            raise CheckpointError(
                f"Checkpoint {path} holds a {payload.get('kind')!r}, "
                f"expected a {self._checkpoint_kind!r}."
            )
        if payload.get("format_version") != self._format_version:
            raise CheckpointError(
                f"Checkpoint {path} has format version {payload.get('format_version')}, "
                f"this library reads version {self._format_version}."
            )
        self.load_state_dict(payload["state"])
        return self
