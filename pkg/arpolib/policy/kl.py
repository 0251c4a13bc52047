import torch

from arpolib.internal.errors import ShapeError

__all__ = ["PROBABILITY_FLOOR", "categorical_kl", "adversarial_kl"]

PROBABILITY_FLOOR = 1e-8


def categorical_kl(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    """
    Row-wise KL(p || q) of categorical distributions, both clamped at PROBABILITY_FLOOR.

    :param p: (N, A) probabilities.
    :param q: (N, A) probabilities.
    :return: (N,) divergences, non-negative.
    """
    if p.shape != q.shape or p.dim() != 2:
        raise ShapeError(
            f"Expected two (N, A) distributions, got {tuple(p.shape)} and {tuple(q.shape)}."
        )
    p = p.clamp_min(PROBABILITY_FLOOR)
    q = q.clamp_min(PROBABILITY_FLOOR)
    # Clamped rows may leave the simplex.
    return torch.sum(p * (torch.log(p) - torch.log(q)), dim=1).clamp_min(0.0)


def adversarial_kl(clean: torch.Tensor, perturbed: torch.Tensor) -> torch.Tensor:
    """
    Mean KL between the action distributions on clean and perturbed observations.
    Gradients flow through both arguments.

    :param clean: (N, A) probabilities on the original observations.
    :param perturbed: (N, A) probabilities on the translated observations.
    :return: Scalar, 0 for identical distributions.
    """
    return categorical_kl(clean, perturbed).mean()
