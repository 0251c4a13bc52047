import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch
from torch import nn

from arpolib.internal.errors import (
    ConfigurationError,
    NonFiniteLossError,
    NumericGuardError,
    ShapeError,
)
from arpolib.internal.image import check_image_batch, to_tensor
from arpolib.internal.interfaces import Checkpointable
from arpolib.internal.seeding import seeded_torch
from arpolib.policy.kl import PROBABILITY_FLOOR, adversarial_kl, categorical_kl
from arpolib.policy.network import PolicyNetwork
from arpolib.rollout.batch import RolloutBatch
from arpolib.rollout.collect import sample_actions

__all__ = [
    "PolicyConfig",
    "PolicyLossReport",
    "PolicyModel",
    "ppo_surrogate",
    "policy_step",
]

logger = logging.getLogger(__name__)

ADVANTAGE_EPS = 1e-8


@dataclass
class PolicyConfig:
    """
    Config for the policy and its PPO update

    lr: Adam learning rate.
    gamma: discount of the advantage estimate.
    lam: GAE trace decay.
    clip: surrogate clipping range, ignored when unclipped.
    unclipped: use the plain importance weighted surrogate.
    vf_clip: clipping range of value updates around the behaviour values.
    c_v: weight of the value loss.
    c_e: weight of the entropy bonus.
    beta1: weight of the adversarial divergence.
    grad_clip: maximum global gradient norm.
    num_sgd_iter: epochs over the batch per update.
    minibatch_size: transitions per gradient step.
    normalize_advantages: standardize advantages over the batch.
    kl_coeff: initial weight of the penalty on divergence from the behaviour policy.
    kl_target: divergence the penalty weight adapts towards.
    """

    lr: float = 5e-4
    gamma: float = 0.999
    lam: float = 0.95
    clip: float = 0.2
    unclipped: bool = False
    vf_clip: float = 0.2
    c_v: float = 0.5
    c_e: float = 0.01
    beta1: float = 20.0
    grad_clip: float = 0.5
    num_sgd_iter: int = 3
    minibatch_size: int = 512
    normalize_advantages: bool = True
    kl_coeff: float = 0.0
    kl_target: float = 0.01

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError(f"Learning rate has to be positive, got {self.lr}.")
        if self.clip <= 0:
            raise ConfigurationError(f"Clip range has to be positive, got {self.clip}.")
        for name in ("vf_clip", "c_v", "c_e", "beta1", "grad_clip", "kl_coeff"):
            if getattr(self, name) < 0:
                raise ConfigurationError(
                    f"{name} cannot be negative, got {getattr(self, name)}."
                )
        if self.num_sgd_iter < 1 or self.minibatch_size < 1:
            raise ConfigurationError(
                "The update needs at least one epoch of non-empty minibatches."
            )
        if self.kl_target <= 0:
            raise ConfigurationError(
                f"KL target has to be positive, got {self.kl_target}."
            )

    @property
    def effective_clip(self) -> float:
        return math.inf if self.unclipped else self.clip


@dataclass
class PolicyLossReport:
    """
    Means over the minibatches of an update.
    total = surrogate + c_v * value_loss - c_e * entropy + beta1 * adv_kl
            + kl_coeff * approx_kl, the last term being absent while kl_coeff is 0.
    """

    surrogate: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    adv_kl: float = 0.0
    total: float = 0.0
    approx_kl: float = 0.0
    kl_coeff: float = 0.0

    def as_dict(self, prefix: str = "") -> Dict[str, float]:
        return {prefix + k: v for k, v in asdict(self).items()}


class PolicyModel(Checkpointable):
    """
    Stochastic policy pi(a|x) with a value estimate V(x).

    :param network: Module mapping (B, 3, H, W) images in [0, 1] to (logits, values).
    :param config: Policy configuration.
    """

    _checkpoint_kind = "policy"

    def __init__(self, network: nn.Module, config: PolicyConfig = PolicyConfig()):
        self.network = network
        self.config = config
        self.kl_coeff = config.kl_coeff
        self.optimizer = torch.optim.Adam(network.parameters(), lr=config.lr, eps=1e-5)
        self.dtype = next(network.parameters()).dtype

    @classmethod
    def build(
        cls,
        image_size: int,
        config: PolicyConfig = PolicyConfig(),
        seed: int = 0,
        n_actions: int = 5,
    ) -> "PolicyModel":
        """
        :return: Policy with a ``PolicyNetwork`` initialised from the seed.
        """
        with seeded_torch(seed):
            network = PolicyNetwork(image_size, n_actions)
        return cls(network, config)

    def probabilities(self, images: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        :param images: (B, 3, H, W) tensor in [0, 1].
        :return: (B, A) probabilities and (B,) values, differentiable.
        """
        logits, values = self.network(images)
        return torch.softmax(logits, dim=1), values

    def action_dist(self, images: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        :param images: Batch (N, H, W, 3) or single image in [0, 1].
        :return: (N, A) float64 probabilities summing to 1 and (N,) values.
        :raises ShapeError: if the images do not fit the network.
        """
        batch = check_image_batch(images)
        with torch.no_grad():
            probabilities, values = self.probabilities(to_tensor(batch, dtype=self.dtype))
        probabilities = probabilities.double().numpy()
        return (
            probabilities / probabilities.sum(axis=1, keepdims=True),
            values.double().numpy(),
        )

    def act(self, images: np.ndarray, rng: np.random.Generator, greedy: bool = False):
        """
        :return: (N,) actions, sampled or the most probable ones.
        """
        probabilities, _ = self.action_dist(images)
        if greedy:
            return np.argmax(probabilities, axis=1)
        return sample_actions(probabilities, rng)

    def state_dict(self) -> Dict[str, Any]:
        return {
            "network": self.network.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "kl_coeff": self.kl_coeff,
        }

    def load_state_dict(self, state: Dict[str, Any]):
        self.network.load_state_dict(state["network"])
        self.optimizer.load_state_dict(state["optimizer"])
        self.kl_coeff = state["kl_coeff"]


def ppo_surrogate(
    probabilities: torch.Tensor,
    old_probabilities: torch.Tensor,
    actions: torch.Tensor,
    advantages: torch.Tensor,
    clip: float = 0.2,
) -> torch.Tensor:
    """
    Negated clipped surrogate -E[min(r A, clip(r, 1 - clip, 1 + clip) A)]
    with r = pi(a|x) / pi_old(a|x).

    :param probabilities: (N, A) current distributions.
    :param old_probabilities: (N, A) behaviour distributions.
    :param actions: (N,) taken actions.
    :param advantages: (N,) advantages.
    :param clip: Clip range, ``math.inf`` for the unclipped surrogate.
    :raises NumericGuardError: if a taken action had zero behaviour probability.
    """
    if probabilities.shape != old_probabilities.shape:
        raise ShapeError(
            f"Distributions of shapes {tuple(probabilities.shape)} and "
            f"{tuple(old_probabilities.shape)} cannot be compared."
        )
    actions = actions.long().view(-1, 1)
    new = probabilities.gather(1, actions).squeeze(1)
    old = old_probabilities.gather(1, actions).squeeze(1)
    if torch.any(old <= 0):
        raise NumericGuardError(
            "A taken action has zero probability under the behaviour policy."
        )
    ratio = new / old
    unclipped = ratio * advantages
    if math.isinf(clip):
        return -unclipped.mean()
    clipped = torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * advantages
    return -torch.min(unclipped, clipped).mean()


def _entropy(probabilities: torch.Tensor) -> torch.Tensor:
    return -torch.sum(
        probabilities * torch.log(probabilities.clamp_min(PROBABILITY_FLOOR)), dim=1
    ).mean()


def policy_step(
    model: PolicyModel,
    batch: RolloutBatch,
    translated: Optional[np.ndarray],
    rng: np.random.Generator,
) -> PolicyLossReport:
    """
    PPO update over num_sgd_iter epochs of shuffled minibatches.
    The surrogate, value and entropy terms see the original observations only,
    the adversarial divergence compares them with their translations and
    back-propagates through both.

    :param model: Policy to update.
    :param batch: Batch with computed advantages.
    :param translated: (N, H, W, 3) translated observations, None for plain PPO.
    :param rng: Generator of the minibatch shuffles.
    :return: Loss components averaged over the minibatches.
    """
    config = model.config
    batch.validate()
    advantages = batch.advantages
    if config.normalize_advantages and len(advantages) > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + ADVANTAGE_EPS)

    dtype = model.dtype
    observations = to_tensor(batch.observations, dtype=dtype)
    perturbed = None if translated is None else to_tensor(translated, dtype=dtype)
    if perturbed is not None and perturbed.shape != observations.shape:
        raise ShapeError(
            f"Translated observations {tuple(perturbed.shape)} do not match "
            f"the batch {tuple(observations.shape)}."
        )
    actions = torch.as_tensor(batch.actions, dtype=torch.long)
    old_probabilities = torch.as_tensor(batch.action_dists, dtype=dtype)
    old_values = torch.as_tensor(batch.values, dtype=dtype)
    returns = torch.as_tensor(batch.returns, dtype=dtype)
    advantages = torch.as_tensor(advantages, dtype=dtype)
    use_kl = config.beta1 != 0.0 and perturbed is not None

    sums = PolicyLossReport()
    n_updates = 0
    for _ in range(config.num_sgd_iter):
        order = rng.permutation(len(batch))
        for start in range(0, len(batch), config.minibatch_size):
            index = torch.as_tensor(order[start : start + config.minibatch_size])
            probabilities, values = model.probabilities(observations[index])

            surrogate = ppo_surrogate(
                probabilities,
                old_probabilities[index],
                actions[index],
                advantages[index],
                config.effective_clip,
            )
            values_clipped = old_values[index] + torch.clamp(
                values - old_values[index], -config.vf_clip, config.vf_clip
            )
            value_loss = torch.max(
                (values - returns[index]) ** 2, (values_clipped - returns[index]) ** 2
            ).mean()
            entropy = _entropy(probabilities)
            total = surrogate + config.c_v * value_loss - config.c_e * entropy

            adv_kl = torch.zeros((), dtype=dtype)
            if use_kl:
                perturbed_probabilities, _ = model.probabilities(perturbed[index])
                adv_kl = adversarial_kl(probabilities, perturbed_probabilities)
                total = total + config.beta1 * adv_kl
            elif perturbed is not None:
                with torch.no_grad():
                    perturbed_probabilities, _ = model.probabilities(perturbed[index])
                    adv_kl = adversarial_kl(probabilities, perturbed_probabilities)

            approx_kl = categorical_kl(old_probabilities[index], probabilities).mean()
            if model.kl_coeff != 0.0:
                total = total + model.kl_coeff * approx_kl

            components = {
                "surrogate": surrogate.item(),
                "value_loss": value_loss.item(),
                "entropy": entropy.item(),
                "adv_kl": adv_kl.item(),
                "total": total.item(),
                "approx_kl": approx_kl.item(),
            }
            if not math.isfinite(components["total"]):
                raise NonFiniteLossError(
                    "The policy loss is not finite, aborting the update.", components
                )
            model.optimizer.zero_grad()
            total.backward()
            nn.utils.clip_grad_norm_(model.network.parameters(), config.grad_clip)
            model.optimizer.step()

            for name, value in components.items():
                setattr(sums, name, getattr(sums, name) + value)
            n_updates += 1

    report = PolicyLossReport(
        **{name: value / n_updates for name, value in asdict(sums).items()}
    )
    report.kl_coeff = model.kl_coeff
    _adapt_kl_coeff(model, report.approx_kl)
    logger.debug(f"Policy update over {n_updates} minibatches: {report}")
    return report


def _adapt_kl_coeff(model: PolicyModel, approx_kl: float):
    target = model.config.kl_target
    if approx_kl > 2.0 * target:
        model.kl_coeff *= 1.5
    elif approx_kl < 0.5 * target:
        model.kl_coeff *= 0.5
