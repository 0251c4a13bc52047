from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import torch
from torch import nn

from arpolib.internal.errors import ShapeError
from arpolib.internal.image import to_unit
from arpolib.policy.kl import PROBABILITY_FLOOR, adversarial_kl

__all__ = [
    "GanLossReport",
    "gradient_penalty",
    "adversarial_loss",
    "classification_loss",
    "classification_losses",
    "reconstruction_loss",
    "discriminator_losses",
    "generator_losses",
]

NAN = float("nan")


@dataclass
class GanLossReport:
    """
    Loss components of a translator update, NaN for components
    the update did not compute.
    """

    adv: float = NAN
    cls_real: float = NAN
    cls_fake: float = NAN
    rec: float = NAN
    grad_penalty: float = NAN
    policy_kl: float = NAN
    d_total: float = NAN
    g_total: float = NAN

    def merge(self, other: "GanLossReport") -> "GanLossReport":
        """
        :return: Report taking every component computed by ``other`` from it.
        """
        values = asdict(self)
        values.update({k: v for k, v in asdict(other).items() if v == v})
        return GanLossReport(**values)

    def as_dict(self, prefix: str = "") -> Dict[str, float]:
        return {prefix + k: v for k, v in asdict(self).items()}


def gradient_penalty(
    discriminator: nn.Module,
    real: torch.Tensor,
    fake: torch.Tensor,
    alpha: Optional[torch.Tensor] = None,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """
    E[(||grad D_src(x_hat)||_2 - 1)^2] over uniform interpolates of real and fake.

    :param alpha: (B,) interpolation coefficients, drawn uniformly when omitted.
    :param generator: Random generator of alpha.
    """
    if alpha is None:
        alpha = torch.rand(len(real), generator=generator, dtype=real.dtype)
    alpha = alpha.to(real.dtype).view(-1, 1, 1, 1)
    interpolates = alpha * real.detach() + (1.0 - alpha) * fake.detach()
    gradients = None
    # The penalty needs input gradients even when called under no_grad.
    with torch.enable_grad():
        interpolates.requires_grad_(True)
        scores, _ = discriminator(interpolates)
        # A critic whose output does not depend on its input has zero gradients.
        if scores.requires_grad:
            (gradients,) = torch.autograd.grad(
                scores.sum(), interpolates, create_graph=True, allow_unused=True
            )
    if gradients is None:
        gradients = torch.zeros_like(interpolates)
    squared = gradients.flatten(1).pow(2).sum(dim=1)
    # sqrt has no derivative at 0, route zero norms through a constant branch.
    positive = squared > 0
    safe = torch.where(positive, squared, torch.ones_like(squared))
    norms = torch.where(positive, torch.sqrt(safe), torch.zeros_like(squared))
    return ((norms - 1.0) ** 2).mean()


def adversarial_loss(
    discriminator: nn.Module,
    real: torch.Tensor,
    fake: torch.Tensor,
    lambda_gp: float = 10.0,
    alpha: Optional[torch.Tensor] = None,
    generator: Optional[torch.Generator] = None,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    :param discriminator: Critic returning (scores, logits).
    :param real: (B, 3, H, W) real images in [-1, 1].
    :param fake: (B, 3, H, W) translated images in [-1, 1].
    :param lambda_gp: Weight of the gradient penalty.
    :return: L_adv = E[D_src(real)] - E[D_src(fake)] and lambda_gp * gradient penalty.
    """
    real_scores, _ = discriminator(real)
    fake_scores, _ = discriminator(fake)
    penalty = lambda_gp * gradient_penalty(discriminator, real, fake, alpha, generator)
    return real_scores.mean() - fake_scores.mean(), penalty


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """
    Mean -log of the softmax probability of the labels, clamped at PROBABILITY_FLOOR.
    :raises ShapeError: on an empty batch.
    """
    if len(logits) == 0:
        raise ShapeError("Classification loss of an empty batch is undefined.")
    probabilities = torch.softmax(logits, dim=1)
    picked = probabilities.gather(1, labels.long().view(-1, 1)).squeeze(1)
    return -torch.log(picked.clamp_min(PROBABILITY_FLOOR)).mean()


def classification_losses(
    discriminator: nn.Module,
    real: torch.Tensor,
    source_labels: torch.Tensor,
    fake: torch.Tensor,
    target_labels: torch.Tensor,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    :return: Domain classification loss of real images against their source labels
        and of fake images against their target labels.
    """
    _, real_logits = discriminator(real)
    _, fake_logits = discriminator(fake)
    return (
        classification_loss(real_logits, source_labels),
        classification_loss(fake_logits, target_labels),
    )


def reconstruction_loss(
    generator: nn.Module,
    real: torch.Tensor,
    source_labels: torch.Tensor,
    target_labels: torch.Tensor,
) -> torch.Tensor:
    """
    :return: Mean per-pixel L1 between x and G(G(x, target), source).
    """
    reconstructed = generator(generator(real, target_labels), source_labels)
    return (real - reconstructed).abs().mean()


def discriminator_losses(
    generator: nn.Module,
    discriminator: nn.Module,
    real: torch.Tensor,
    source_labels: torch.Tensor,
    target_labels: torch.Tensor,
    lambda_cls: float,
    lambda_gp: float,
    alpha: Optional[torch.Tensor] = None,
    random: Optional[torch.Generator] = None,
) -> Tuple[torch.Tensor, GanLossReport]:
    """
    L_D = -L_adv + lambda_cls * L_cls(real) + penalty, the generator is held fixed.
    """
    with torch.no_grad():
        fake = generator(real, target_labels)
    real_scores, real_logits = discriminator(real)
    fake_scores, _ = discriminator(fake)
    adv = real_scores.mean() - fake_scores.mean()
    cls_real = classification_loss(real_logits, source_labels)
    penalty = lambda_gp * gradient_penalty(discriminator, real, fake, alpha, random)
    total = -adv + lambda_cls * cls_real + penalty
    return total, GanLossReport(
        adv=adv.item(),
        cls_real=cls_real.item(),
        grad_penalty=penalty.item(),
        d_total=total.item(),
    )


def generator_losses(
    generator: nn.Module,
    discriminator: nn.Module,
    policy_network: Optional[nn.Module],
    real: torch.Tensor,
    source_labels: torch.Tensor,
    target_labels: torch.Tensor,
    lambda_cls: float,
    lambda_rec: float,
    beta2: float,
) -> Tuple[torch.Tensor, GanLossReport]:
    """
    L_G = L_adv + lambda_cls * L_cls(fake) + lambda_rec * L_rec
          - beta2 * KL(pi(x) || pi(x_translated)).
    The policy sees images in [0, 1]. With beta2 = 0 the divergence is reported only.
    """
    fake = generator(real, target_labels)
    fake_scores, fake_logits = discriminator(fake)
    with torch.no_grad():
        real_scores, _ = discriminator(real)
    adv = real_scores.mean() - fake_scores.mean()
    cls_fake = classification_loss(fake_logits, target_labels)
    rec = (real - generator(fake, source_labels)).abs().mean()
    total = adv + lambda_cls * cls_fake + lambda_rec * rec

    policy_kl = torch.zeros((), dtype=real.dtype)
    if policy_network is not None:
        with torch.no_grad():
            clean = torch.softmax(policy_network(to_unit(real))[0], dim=1)
        if beta2 != 0.0:
            perturbed = torch.softmax(policy_network(to_unit(fake))[0], dim=1)
            policy_kl = adversarial_kl(clean, perturbed)
            total = total - beta2 * policy_kl
        else:
            with torch.no_grad():
                perturbed = torch.softmax(policy_network(to_unit(fake))[0], dim=1)
                policy_kl = adversarial_kl(clean, perturbed)
    return total, GanLossReport(
        adv=adv.item(),
        cls_fake=cls_fake.item(),
        rec=rec.item(),
        policy_kl=policy_kl.item(),
        g_total=total.item(),
    )
