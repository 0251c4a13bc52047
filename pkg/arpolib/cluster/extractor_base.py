from abc import ABC, abstractmethod
from typing import Any, Dict

import numpy as np

from arpolib.internal.image import check_image_batch

__all__ = ["FeatureExtractorBase", "extract_features"]


class FeatureExtractorBase(ABC):
    """
    Fixed map from images to feature vectors.
    Extractors are never trained, the same image always gives the same features.
    """

    @property
    @abstractmethod
    def dim(self) -> int:
        pass

    @abstractmethod
    def _extract(self, images: np.ndarray) -> np.ndarray:
        """
        :param images: (N, H, W, 3) batch, already validated.
        :return: (N, dim) float64 features.
        """
        pass

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        """
        :return: JSON-serializable description sufficient to rebuild the extractor.
        """
        pass

    def __call__(self, images: np.ndarray) -> np.ndarray:
        return extract_features(self, images)


def extract_features(extractor: FeatureExtractorBase, images: np.ndarray) -> np.ndarray:
    """
    :param extractor: Feature extractor.
    :param images: Batch (k, H, W, 3) or single image (H, W, 3) in [0, 1].
    :return: (k, d) features.
    :raises ShapeError: if the images are not RGB images.
    """
    return extractor._extract(check_image_batch(images))
