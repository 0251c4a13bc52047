import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import numpy as np
import torch
from torch.nn import functional as F

from arpolib.cluster.extractor_base import FeatureExtractorBase
from arpolib.internal.errors import ConfigurationError, ShapeError
from arpolib.internal.image import to_tensor

__all__ = ["ExtractorConfig", "FeatureExtractor"]

HIDDEN_CHANNELS = 16


@dataclass
class ExtractorConfig:
    """
    Config for the random projection feature extractor

    dim: total feature dimension, conv features plus 3 * histogram_bins.
    histogram_bins: bins of every per-channel color histogram.
    seed: seed of the random conv weights.
    pixel_mask: optional (H, W) boolean mask, only these pixels are looked at.
    """

    dim: int = 64
    histogram_bins: int = 8
    seed: int = 0
    pixel_mask: Optional[List[List[bool]]] = None

    def __post_init__(self):
        if self.histogram_bins < 1:
            raise ConfigurationError(
                f"Histograms need at least one bin, got {self.histogram_bins}."
            )
        if self.dim <= 3 * self.histogram_bins:
            raise ConfigurationError(
                f"Feature dimension {self.dim} leaves no room for conv features "
                f"next to {3 * self.histogram_bins} histogram features."
            )

    @property
    def conv_dim(self) -> int:
        return self.dim - 3 * self.histogram_bins


class FeatureExtractor(FeatureExtractorBase):
    """
    Two strided conv layers with seeded random weights followed by a global
    average pool, concatenated with normalized per-channel color histograms.

    :param config: Extractor configuration.
    """

    def __init__(self, config: ExtractorConfig = ExtractorConfig()):
        self._config = config
        generator = torch.Generator().manual_seed(config.seed)
        self._weights = [
            self._random_conv(HIDDEN_CHANNELS, 3, generator),
            self._random_conv(config.conv_dim, HIDDEN_CHANNELS, generator),
        ]
        self._mask = (
            None
            if config.pixel_mask is None
            else np.asarray(config.pixel_mask, dtype=bool)
        )

    @property
    def config(self) -> ExtractorConfig:
        return self._config

    @property
    def dim(self) -> int:
        return self._config.dim

    def describe(self) -> Dict[str, Any]:
        return asdict(self._config)

    def _extract(self, images: np.ndarray) -> np.ndarray:
        if self._mask is not None and self._mask.shape != images.shape[1:3]:
            raise ShapeError(
                f"Pixel mask of shape {self._mask.shape} does not fit "
                f"images of shape {images.shape[1:3]}."
            )
        images = images.astype(np.float64)
        return np.concatenate(
            [self._conv_features(images), self._histogram_features(images)], axis=1
        )

    def _conv_features(self, images: np.ndarray) -> np.ndarray:
        x = to_tensor(images, dtype=torch.float64)
        if self._mask is not None:
            x = x * torch.as_tensor(self._mask, dtype=torch.float64)
        with torch.no_grad():
            for weight in self._weights:
                x = F.relu(F.conv2d(x, weight, stride=2, padding=1))
            return x.mean(dim=(2, 3)).numpy()

    def _histogram_features(self, images: np.ndarray) -> np.ndarray:
        bins = self._config.histogram_bins
        n_images = len(images)
        pixels = images.reshape(n_images, -1, 3)
        if self._mask is not None:
            pixels = pixels[:, self._mask.reshape(-1)]
        indices = np.clip((pixels * bins).astype(np.int64), 0, bins - 1)
        offsets = (
            np.arange(n_images)[:, None, None] * 3 * bins
            + np.arange(3)[None, None, :] * bins
        )
        counts = np.bincount(
            (indices + offsets).reshape(-1), minlength=n_images * 3 * bins
        ).reshape(n_images, 3 * bins)
        return counts / max(pixels.shape[1], 1)

    @staticmethod
    def _random_conv(
        out_channels: int, in_channels: int, generator: torch.Generator
    ) -> torch.Tensor:
        fan_in = in_channels * 9
        weight = torch.randn(
            out_channels, in_channels, 3, 3, generator=generator, dtype=torch.float64
        )
        return weight * math.sqrt(2.0 / fan_in)
