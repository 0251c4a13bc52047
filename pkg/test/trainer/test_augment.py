import numpy as np
import pytest

from arpolib.internal.errors import DomainError
from arpolib.trainer import cutout_color_augment, sample_cutout_boxes


def test_boxes_respect_area_bounds():
    boxes = sample_cutout_boxes(500, 16, 20, np.random.default_rng(0), 0.05, 0.3)
    areas = boxes[:, 2] * boxes[:, 3] / (16 * 20)

    assert np.all(areas >= 0.05) and np.all(areas <= 0.3)
    assert np.all(boxes[:, 0] + boxes[:, 2] <= 16)
    assert np.all(boxes[:, 1] + boxes[:, 3] <= 20)
    assert np.all(boxes >= 0)


def test_cutout_paints_one_uniform_rectangle():
    rng = np.random.default_rng(1)
    images = rng.random((8, 16, 16, 3)).astype(np.float32)
    augmented = cutout_color_augment(images, 5)
    boxes = sample_cutout_boxes(8, 16, 16, np.random.default_rng(5))

    assert augmented.dtype == images.dtype
    for image, original, (top, left, height, width) in zip(augmented, images, boxes):
        inside = np.zeros((16, 16), dtype=bool)
        inside[top : top + height, left : left + width] = True
        assert np.array_equal(image[~inside], original[~inside])
        assert np.all(image[inside] == image[top, left])


def test_cutout_is_seeded():
    images = np.zeros((4, 16, 16, 3), dtype=np.float32)

    assert np.array_equal(cutout_color_augment(images, 3), cutout_color_augment(images, 3))
    assert not np.array_equal(
        cutout_color_augment(images, 3), cutout_color_augment(images, 4)
    )


def test_cutout_leaves_input_untouched():
    images = np.zeros((2, 16, 16, 3), dtype=np.float32)
    cutout_color_augment(images, np.random.default_rng(0))

    assert not images.any()


def test_tiny_frame_has_no_valid_box():
    with pytest.raises(DomainError):
        cutout_color_augment(np.zeros((1, 1, 1, 3), dtype=np.float32), 0)
