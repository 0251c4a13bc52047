import numpy as np
import pytest
import torch
from torch import nn

from arpolib.cluster import ClusterConfig, ExtractorConfig
from arpolib.policy import PolicyConfig
from arpolib.trainer import Algo, TrainConfig
from arpolib.translator import TranslatorConfig
from arpolib.world import WorldConfig, make_state_mask


@pytest.fixture()
def small_world_config():
    return WorldConfig(
        n_styles=4,
        grid_size=4,
        image_size=16,
        horizon=8,
        train_styles=[0, 1],
        test_styles=[2, 3],
        n_train_layouts=4,
        n_test_levels=8,
    )


@pytest.fixture()
def make_train_config(small_world_config):
    def make(algo=Algo.PPO, seed=0, **overrides):
        values = dict(
            algo=algo,
            seed=seed,
            total_timesteps=96,
            n_envs=4,
            n_steps=8,
            warmup_observations=32,
            eval_interval=0,
            eval_episodes=2,
            checkpoint_interval=0,
            world=small_world_config,
            policy=PolicyConfig(minibatch_size=16, num_sgd_iter=2),
            translator=TranslatorConfig(hidden_channels=4, n_critic=2, batch_size=16),
            cluster=ClusterConfig(n_clusters=2, n_init=2, max_iter=30),
            extractor=ExtractorConfig(dim=32, histogram_bins=4),
        )
        values.update(overrides)
        return TrainConfig(**values)

    return make


class MaskedPolicyNet(nn.Module):
    """
    Policy which only ever looks at the state region of the frame.
    """

    def __init__(self, mask: np.ndarray, n_actions: int = 5):
        super().__init__()
        self.register_buffer("mask", torch.as_tensor(mask, dtype=torch.float32))
        size = mask.shape[0]
        self.logits = nn.Linear(3 * size * size, n_actions)
        self.value = nn.Linear(3 * size * size, 1)

    def forward(self, x):
        features = (x * self.mask).flatten(1)
        return self.logits(features), self.value(features).squeeze(1)


class DistractorShiftGenerator(nn.Module):
    """
    Translator which only ever changes the distractor region, by a per-domain shift.
    """

    def __init__(self, mask: np.ndarray, n_domains: int):
        super().__init__()
        self.register_buffer("outside", 1.0 - torch.as_tensor(mask, dtype=torch.float32))
        self.shift = nn.Parameter(torch.linspace(-0.5, 0.5, n_domains))

    def forward(self, x, labels):
        shift = self.shift[labels.long()].view(-1, 1, 1, 1).to(x.dtype)
        return torch.clamp(x + shift * self.outside.to(x.dtype), -1.0, 1.0)


@pytest.fixture()
def masked_policy_net(small_world_config):
    torch.manual_seed(0)
    mask = make_state_mask(small_world_config.grid_size, small_world_config.cell_size)
    return MaskedPolicyNet(mask)


@pytest.fixture()
def distractor_shift_generator(small_world_config):
    mask = make_state_mask(small_world_config.grid_size, small_world_config.cell_size)
    return DistractorShiftGenerator(mask, n_domains=2)
