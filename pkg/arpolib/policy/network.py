from typing import Tuple

import torch
from torch import nn

from arpolib.internal.errors import ShapeError

__all__ = ["PolicyNetwork"]


class PolicyNetwork(nn.Module):
    """
    Small conv trunk with policy and value heads.

    :param image_size: Side of the square input images.
    :param n_actions: Number of discrete actions.
    :param hidden: Width of the dense layers.
    """

    def __init__(self, image_size: int, n_actions: int = 5, hidden: int = 256):
        super().__init__()
        self.image_size = image_size
        self.n_actions = n_actions
        self.trunk = nn.Sequential(
            nn.Conv2d(3, 16, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(32, 32, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(4),
            nn.Flatten(),
            nn.Linear(32 * 4 * 4, hidden),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
        )
        self.logits = nn.Linear(hidden, n_actions)
        self.value = nn.Linear(hidden, 1)

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        :param x: (B, 3, H, W) images in [0, 1].
        :return: (B, A) action logits and (B,) values.
        """
        if x.dim() != 4 or x.shape[1:] != (3, self.image_size, self.image_size):
            raise ShapeError(
                f"Expected images of shape (B, 3, {self.image_size}, {self.image_size}), "
                f"got {tuple(x.shape)}."
            )
        features = self.trunk(x)
        return self.logits(features), self.value(features).squeeze(1)
