import math
from typing import Union

import numpy as np

from arpolib.internal.errors import DomainError
from arpolib.internal.image import check_image_batch

__all__ = ["sample_cutout_boxes", "cutout_color_augment"]


def sample_cutout_boxes(
    n: int,
    height: int,
    width: int,
    rng: np.random.Generator,
    min_area: float = 0.05,
    max_area: float = 0.30,
) -> np.ndarray:
    """
    Draw rectangles covering [min_area, max_area] of the frame.
    The height is uniform over the heights admitting a valid width,
    the width is uniform over the valid widths, the position is uniform.

    :return: (n, 4) boxes as (top, left, box_height, box_width).
    :raises DomainError: if no rectangle of the frame fits the area bounds.
    """
    frame = height * width
    heights, width_ranges = [], []
    for box_height in range(1, height + 1):
        low = max(1, math.ceil(min_area * frame / box_height - 1e-9))
        high = min(width, math.floor(max_area * frame / box_height + 1e-9))
        if low <= high:
            heights.append(box_height)
            width_ranges.append((low, high))
    if not heights:
        raise DomainError(
            f"No rectangle of a {height}x{width} frame covers "
            f"[{min_area}, {max_area}] of its area."
        )
    boxes = np.empty((n, 4), dtype=np.int64)
    for i in range(n):
        choice = int(rng.integers(len(heights)))
        box_height = heights[choice]
        low, high = width_ranges[choice]
        box_width = int(rng.integers(low, high + 1))
        boxes[i] = (
            rng.integers(height - box_height + 1),
            rng.integers(width - box_width + 1),
            box_height,
            box_width,
        )
    return boxes


def cutout_color_augment(
    images: np.ndarray,
    rng: Union[int, np.random.Generator],
    min_area: float = 0.05,
    max_area: float = 0.30,
) -> np.ndarray:
    """
    Paint one uniformly colored rectangle into every image.

    :param images: (N, H, W, 3) images in [0, 1].
    :param rng: Generator or seed of the boxes and colors.
    :return: Augmented copy, pixels outside the rectangles are unchanged.
    """
    images = check_image_batch(images)
    rng = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    n, height, width, _ = images.shape
    boxes = sample_cutout_boxes(n, height, width, rng, min_area, max_area)
    colors = rng.random((n, 3)).astype(images.dtype)
    augmented = images.copy()
    for image, (top, left, box_height, box_width), color in zip(augmented, boxes, colors):
        image[top : top + box_height, left : left + box_width] = color
    return augmented
