"""Generator / discriminator pair for flattened CSI vectors."""

from __future__ import annotations

import torch
from torch import nn


class Generator(nn.Module):
    """Latent Gaussian vector -> standardized flattened CSI sample.

    A learned per-coordinate output-noise layer (reparameterized, so it
    trains through the adversarial loss like every other weight) keeps the
    sample distribution full-rank; without it the network output lives on a
    low-dimensional manifold and collapses the small-variance directions of
    noisy channel data.
    """

    def __init__(self, latent_dim: int, out_dim: int, widths=(128, 128),
                 output_noise: bool = True):
        super().__init__()
        layers = []
        prev = latent_dim
        for w in widths:
            layers += [nn.Linear(prev, w), nn.LeakyReLU(0.2)]
            prev = w
        layers.append(nn.Linear(prev, out_dim))
        self.net = nn.Sequential(*layers)
        self.log_sigma = nn.Parameter(torch.full((out_dim,), -1.0)) if output_noise else None
        self.latent_dim = latent_dim
        self.out_dim = out_dim

    def forward(self, z: torch.Tensor, eps: torch.Tensor | None = None) -> torch.Tensor:
        out = self.net(z)
        if self.log_sigma is not None:
            if eps is None:
                eps = torch.randn_like(out)
            out = out + torch.exp(self.log_sigma) * eps
        return out


class Discriminator(nn.Module):
    """Flattened CSI sample -> real-vs-fake logit."""

    def __init__(self, in_dim: int, widths=(128, 128)):
        super().__init__()
        layers = []
        prev = in_dim
        for w in widths:
            layers += [nn.Linear(prev, w), nn.LeakyReLU(0.2)]
            prev = w
        layers.append(nn.Linear(prev, 1))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).squeeze(-1)
