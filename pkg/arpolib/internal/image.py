from typing import Annotated, Literal

import numpy as np
import numpy.typing as npt
import torch

from arpolib.internal.errors import ShapeError

__all__ = [
    "Image",
    "ImageBatch",
    "Probabilities",
    "check_image_batch",
    "to_tensor",
    "to_internal",
    "to_unit",
]

"""
Image and ImageBatch are the types exchanged with the user:
channel-last float arrays with values in [0, 1].
Networks consume channel-first tensors, ``to_tensor`` converts between them.
"""

Image = Annotated[npt.NDArray[np.float32], Literal["H", "W", 3]]
ImageBatch = Annotated[npt.NDArray[np.float32], Literal["N", "H", "W", 3]]
Probabilities = Annotated[npt.NDArray[np.float64], Literal["N", "A"]]


def check_image_batch(images: np.ndarray, name: str = "images") -> np.ndarray:
    """
    :param images: Single image (H, W, 3) or batch (N, H, W, 3).
    :param name: Name used in the error message.
    :return: Batch view of the images.
    :raises ShapeError: if the array is not an RGB image or batch of them.
    """
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4 or images.shape[-1] != 3:
        raise ShapeError(
            f"Expected {name} of shape (N, H, W, 3) or (H, W, 3), got {images.shape}."
        )
    return images


def to_tensor(
    images: np.ndarray,
    dtype: torch.dtype = torch.float32,
    device: str = "cpu",
) -> torch.Tensor:
    """
    :param images: Batch (N, H, W, 3) or single image (H, W, 3) in [0, 1].
    :param dtype: Dtype of the produced tensor.
    :param device: Device of the produced tensor.
    :return: Tensor of shape (N, 3, H, W).
    """
    images = check_image_batch(images)
    return torch.as_tensor(
        np.ascontiguousarray(images.transpose(0, 3, 1, 2)), device=device
    ).to(dtype)


def to_internal(images: torch.Tensor) -> torch.Tensor:
    """
    Map [0, 1] images to the [-1, 1] range used by the translator.
    """
    return images * 2.0 - 1.0


def to_unit(images: torch.Tensor) -> torch.Tensor:
    """
    Map translator images from [-1, 1] back to [0, 1].
    """
    return (images + 1.0) / 2.0
