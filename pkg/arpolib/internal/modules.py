import contextlib
import hashlib
from typing import Iterator

import torch
from torch import nn

__all__ = ["frozen", "parameter_digest"]


@contextlib.contextmanager
def frozen(module: nn.Module) -> Iterator[nn.Module]:
    """
    Disable gradients for all parameters of the module inside the block.
    Inputs may still receive gradients through the module.
    """
    flags = [parameter.requires_grad for parameter in module.parameters()]
    for parameter in module.parameters():
        parameter.requires_grad_(False)
    try:
        yield module
    finally:
        for parameter, flag in zip(module.parameters(), flags):
            parameter.requires_grad_(flag)


def parameter_digest(module: nn.Module) -> str:
    """
    :return: SHA-256 of all parameters and buffers of the module.
    """
    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
