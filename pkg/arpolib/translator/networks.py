import torch
from torch import nn
from torch.nn import functional as F

__all__ = ["Generator", "Discriminator", "domain_planes"]


def domain_planes(labels: torch.Tensor, n_domains: int, like: torch.Tensor) -> torch.Tensor:
    """
    :param labels: (B,) domain ids.
    :param like: (B, C, H, W) tensor giving spatial size, dtype and device.
    :return: (B, n_domains, H, W) one-hot label planes.
    """
    one_hot = F.one_hot(labels.long(), n_domains).to(like.dtype)
    return one_hot[:, :, None, None].expand(-1, -1, like.shape[2], like.shape[3])


class Generator(nn.Module):
    """
    Conditional image-to-image generator working in the [-1, 1] range.
    The last layer is zero-initialised and added to the input,
    so a fresh generator is the identity.

    :param n_domains: Number of style domains.
    :param hidden_channels: Width of the hidden layers.
    """

    def __init__(self, n_domains: int, hidden_channels: int = 32):
        super().__init__()
        self.n_domains = n_domains
        self.body = nn.Sequential(
            nn.Conv2d(3 + n_domains, hidden_channels, 3, padding=1),
            nn.InstanceNorm2d(hidden_channels, affine=True),
            nn.ReLU(),
            nn.Conv2d(hidden_channels, hidden_channels, 3, padding=1),
            nn.InstanceNorm2d(hidden_channels, affine=True),
            nn.ReLU(),
        )
        self.head = nn.Conv2d(hidden_channels, 3, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        planes = domain_planes(labels, self.n_domains, x)
        residual = self.head(self.body(torch.cat([x, planes], dim=1)))
        return torch.clamp(x + residual, -1.0, 1.0)


class Discriminator(nn.Module):
    """
    Critic with a realness head and a domain classification head.

    :param n_domains: Number of style domains.
    :param hidden_channels: Width of the first layer, doubled by the second.
    """

    def __init__(self, n_domains: int, hidden_channels: int = 32):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Conv2d(3, hidden_channels, 4, stride=2, padding=1),
            nn.LeakyReLU(0.01),
            nn.Conv2d(hidden_channels, 2 * hidden_channels, 4, stride=2, padding=1),
            nn.LeakyReLU(0.01),
            nn.Conv2d(2 * hidden_channels, 2 * hidden_channels, 3, padding=1),
            nn.LeakyReLU(0.01),
        )
        self.src = nn.Conv2d(2 * hidden_channels, 1, 3, padding=1)
        self.cls = nn.Linear(2 * hidden_channels, n_domains)

    def forward(self, x: torch.Tensor):
        """
        :return: (B,) realness scores and (B, n_domains) domain logits.
        """
        features = self.trunk(x)
        return self.src(features).mean(dim=(1, 2, 3)), self.cls(features.mean(dim=(2, 3)))
