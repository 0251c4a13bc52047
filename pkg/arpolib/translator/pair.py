import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch
from matplotlib.figure import Figure
from torch import nn

from arpolib.internal.errors import ConfigurationError, DomainError, NonFiniteLossError
from arpolib.internal.image import check_image_batch, to_internal, to_tensor, to_unit
from arpolib.internal.interfaces import Checkpointable
from arpolib.internal.modules import frozen
from arpolib.internal.seeding import seeded_torch
from arpolib.translator.losses import (
    GanLossReport,
    discriminator_losses,
    generator_losses,
)
from arpolib.translator.networks import Discriminator, Generator

__all__ = [
    "TranslatorConfig",
    "TranslatorPair",
    "random_targets",
    "translate",
    "discriminator_step",
    "generator_step",
    "alternate",
    "translation_grid",
]

logger = logging.getLogger(__name__)


@dataclass
class TranslatorConfig:
    """
    Config for the style translator

    hidden_channels: width of generator and discriminator layers.
    lr: Adam learning rate of both networks.
    betas: Adam betas of both networks.
    lambda_cls: weight of the domain classification losses.
    lambda_rec: weight of the reconstruction loss.
    lambda_gp: weight of the gradient penalty.
    beta2: weight of the policy divergence the generator maximises.
    n_critic: discriminator steps per generator step.
    generator_steps: generator steps per training iteration.
    batch_size: images per translator step, the whole iteration batch when 0.
    """

    hidden_channels: int = 32
    lr: float = 1e-4
    betas: Tuple[float, float] = (0.5, 0.999)
    lambda_cls: float = 1.0
    lambda_rec: float = 10.0
    lambda_gp: float = 10.0
    beta2: float = 20.0
    n_critic: int = 5
    generator_steps: int = 1
    batch_size: int = 256

    def __post_init__(self):
        self.betas = tuple(float(beta) for beta in self.betas)
        if self.lr <= 0:
            raise ConfigurationError(
                f"Learning rate has to be positive, got {self.lr}."
            )
        if len(self.betas) != 2 or not all(0.0 <= beta < 1.0 for beta in self.betas):
            raise ConfigurationError(
                f"Adam betas have to be two numbers in [0, 1), got {self.betas}."
            )
        for name in ("lambda_cls", "lambda_rec", "lambda_gp", "beta2"):
            if getattr(self, name) < 0:
                raise ConfigurationError(
                    f"{name} cannot be negative, got {getattr(self, name)}."
                )
        if self.n_critic < 1 or self.generator_steps < 1:
            raise ConfigurationError(
                "Every iteration needs at least one step of each network."
            )
        if self.batch_size < 0:
            raise ConfigurationError(
                f"Batch size cannot be negative, got {self.batch_size}."
            )


class TranslatorPair(Checkpointable):
    """
    Generator and discriminator of the style translator with their optimizers.

    :param n_domains: Number of style domains, at least 2.
    :param config: Translator configuration.
    :param seed: Seed of the network weights and of the pair's random draws.
    :param dtype: Dtype of the networks.
    """

    _checkpoint_kind = "translator"

    def __init__(
        self,
        n_domains: int,
        config: TranslatorConfig = TranslatorConfig(),
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        if n_domains < 2:
            raise DomainError(f"Translation needs at least 2 domains, got {n_domains}.")
        self.n_domains = n_domains
        self.config = config
        self.dtype = dtype
        with seeded_torch(seed):
            self.generator = Generator(n_domains, config.hidden_channels).to(dtype)
            self.discriminator = Discriminator(n_domains, config.hidden_channels).to(dtype)
        self.g_optimizer = torch.optim.Adam(
            self.generator.parameters(), lr=config.lr, betas=config.betas
        )
        self.d_optimizer = torch.optim.Adam(
            self.discriminator.parameters(), lr=config.lr, betas=config.betas
        )
        self.random = torch.Generator().manual_seed(seed)

    def state_dict(self) -> Dict[str, Any]:
        return {
            "n_domains": self.n_domains,
            "config": asdict(self.config),
            "generator": self.generator.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "g_optimizer": self.g_optimizer.state_dict(),
            "d_optimizer": self.d_optimizer.state_dict(),
            "random": self.random.get_state(),
        }

    def load_state_dict(self, state: Dict[str, Any]):
        if state["n_domains"] != self.n_domains:
            raise DomainError(
                f"Checkpoint translates {state['n_domains']} domains, "
                f"the pair was built for {self.n_domains}."
            )
        self.generator.load_state_dict(state["generator"])
        self.discriminator.load_state_dict(state["discriminator"])
        self.g_optimizer.load_state_dict(state["g_optimizer"])
        self.d_optimizer.load_state_dict(state["d_optimizer"])
        self.random.set_state(state["random"])

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path]) -> "TranslatorPair":
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
        state = payload["state"]
        pair = cls(state["n_domains"], TranslatorConfig(**state["config"]))
        return pair.restore(path)

    def check_domains(self, labels: np.ndarray):
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_domains):
            raise DomainError(
                f"Domains have to be in [0, {self.n_domains}), "
                f"got {np.unique(labels).tolist()}."
            )

    def to_internal(self, images: np.ndarray) -> torch.Tensor:
        return to_internal(to_tensor(images, dtype=self.dtype))


def random_targets(
    source_labels: torch.Tensor, n_domains: int, generator: Optional[torch.Generator] = None
) -> torch.Tensor:
    """
    :return: Target domains drawn uniformly among the domains other than the source.
    """
    if n_domains < 2:
        raise DomainError(f"There is no other domain among {n_domains}.")
    shifts = torch.randint(1, n_domains, source_labels.shape, generator=generator)
    return (source_labels.long() + shifts) % n_domains


def translate(pair: TranslatorPair, images: np.ndarray, targets) -> np.ndarray:
    """
    :param pair: Translator.
    :param images: Batch (N, H, W, 3) or single image in [0, 1].
    :param targets: Target domain, one for all images or one per image.
    :return: Translated images of the same shape, in [0, 1].
    :raises DomainError: if a target is not a domain of the pair.
    """
    single = np.ndim(images) == 3
    batch = check_image_batch(images)
    targets = np.broadcast_to(np.asarray(targets, dtype=np.int64), (len(batch),))
    pair.check_domains(targets)
    with torch.no_grad():
        translated = pair.generator(pair.to_internal(batch), torch.as_tensor(targets))
    result = to_unit(translated).permute(0, 2, 3, 1).numpy().astype(np.float32)
    return result[0] if single else result


def _check_finite(total: torch.Tensor, report: GanLossReport, network: str):
    if not math.isfinite(total.item()):
        raise NonFiniteLossError(
            f"The {network} loss is not finite, aborting the update.", report.as_dict()
        )


def discriminator_step(
    pair: TranslatorPair,
    real: torch.Tensor,
    source_labels: torch.Tensor,
) -> GanLossReport:
    """
    One discriminator update on real images in [-1, 1] labelled by their domains.
    Fakes are produced by the current generator for random other domains.
    """
    config = pair.config
    targets = random_targets(source_labels, pair.n_domains, pair.random)
    pair.d_optimizer.zero_grad()
    with frozen(pair.generator):
        total, report = discriminator_losses(
            pair.generator,
            pair.discriminator,
            real,
            source_labels,
            targets,
            config.lambda_cls,
            config.lambda_gp,
            random=pair.random,
        )
    _check_finite(total, report, "discriminator")
    total.backward()
    pair.d_optimizer.step()
    return report


def generator_step(
    pair: TranslatorPair,
    policy_network: Optional[nn.Module],
    real: torch.Tensor,
    source_labels: torch.Tensor,
) -> GanLossReport:
    """
    One generator update. The discriminator and the policy are frozen,
    so gradients reach the generator only.

    :param policy_network: Network returning (logits, value) on [0, 1] images,
        None to train the translator without the policy divergence.
    """
    config = pair.config
    targets = random_targets(source_labels, pair.n_domains, pair.random)
    pair.g_optimizer.zero_grad()
    with frozen(pair.discriminator):
        if policy_network is None:
            total, report = _generator_losses(pair, None, real, source_labels, targets)
        else:
            with frozen(policy_network):
                total, report = _generator_losses(
                    pair, policy_network, real, source_labels, targets
                )
    _check_finite(total, report, "generator")
    total.backward()
    pair.g_optimizer.step()
    return report


def _generator_losses(pair, policy_network, real, source_labels, targets):
    config = pair.config
    return generator_losses(
        pair.generator,
        pair.discriminator,
        policy_network,
        real,
        source_labels,
        targets,
        config.lambda_cls,
        config.lambda_rec,
        config.beta2,
    )


def alternate(
    pair: TranslatorPair,
    policy_network: Optional[nn.Module],
    images: np.ndarray,
    labels: np.ndarray,
) -> GanLossReport:
    """
    n_critic discriminator steps followed by generator_steps generator steps,
    each on a random batch of the images.

    :param images: (N, H, W, 3) observations in [0, 1].
    :param labels: (N,) cluster of every observation.
    :return: Report merging the last discriminator and generator steps.
    """
    pair.check_domains(labels)
    real = pair.to_internal(images)
    labels = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    batch_size = pair.config.batch_size or len(real)

    def batch():
        if batch_size >= len(real):
            return real, labels
        indices = torch.randperm(len(real), generator=pair.random)[:batch_size]
        return real[indices], labels[indices]

    report = GanLossReport()
    for _ in range(pair.config.n_critic):
        report = report.merge(discriminator_step(pair, *batch()))
    for _ in range(pair.config.generator_steps):
        report = report.merge(generator_step(pair, policy_network, *batch()))
    logger.debug(f"Translator update: {report}")
    return report


def translation_grid(
    pair: TranslatorPair,
    images: np.ndarray,
    source_labels: np.ndarray,
    path: Optional[Union[str, Path]] = None,
) -> np.ndarray:
    """
    Render every image next to its round trip through another domain
    and its translation to every domain.

    :param images: (N, H, W, 3) observations in [0, 1].
    :param source_labels: (N,) cluster of every observation.
    :param path: PNG file to save the grid to.
    :return: (N, 2 + n_domains, H, W, 3) grid: original, round trip, translations.
    """
    images = check_image_batch(images)
    source_labels = np.asarray(source_labels, dtype=np.int64)
    pair.check_domains(source_labels)
    other = (source_labels + 1) % pair.n_domains
    round_trip = translate(pair, translate(pair, images, other), source_labels)
    columns = [images, round_trip] + [
        translate(pair, images, domain) for domain in range(pair.n_domains)
    ]
    grid = np.stack(columns, axis=1)

    if path is not None:
        titles = ["original", "round trip"] + [f"to {d}" for d in range(pair.n_domains)]
        figure = Figure(figsize=(len(columns), len(images) + 0.5))
        axes = figure.subplots(len(images), len(columns), squeeze=False)
        for row in range(len(images)):
            for column in range(len(columns)):
                axis = axes[row, column]
                axis.imshow(np.clip(grid[row, column], 0.0, 1.0))
                axis.set_xticks([])
                axis.set_yticks([])
                if row == 0:
                    axis.set_title(titles[column], fontsize=8)
        figure.tight_layout()
        figure.savefig(path)
    return grid
