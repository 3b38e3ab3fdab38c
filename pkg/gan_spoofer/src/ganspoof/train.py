"""Adversarial training on exported CSI traces.

Samples are flattened to real vectors as [all real parts; all imaginary
parts] in row-major order, matching the detector toolkit's encoder, and
standardized per coordinate before training.  The discriminator maximizes
log D(x) + log(1 - D(G(z))); the generator takes the usual non-saturating
ascent on log D(G(z)).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .model import Discriminator, Generator
from .traceio import load_matrices, write_matrices

MIN_SAMPLES = 1000


class GanError(Exception):
    pass


class TrainingDiverged(GanError):
    def __init__(self, message: str, log: list[dict]):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class GanConfig:
    dataset_path: str
    out_path: str | None = None
    latent_dim: int = 32
    gen_widths: tuple[int, int] = (128, 128)
    disc_widths: tuple[int, int] = (128, 128)
    output_noise: bool = True
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    batch_size: int = 128
    epochs: int = 150
    seed: int = 0
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.latent_dim < 1:
            raise GanError("latent_dim must be >= 1")
        if self.epochs < 1:
            raise GanError("epochs must be >= 1")
        if not 0.0 < self.holdout_fraction < 0.5:
            raise GanError("holdout_fraction must lie in (0, 0.5)")


@dataclass
class TrainedGenerator:
    """Generator network plus everything needed to emit CSI matrices."""

    net: Generator
    mean: np.ndarray           # per-coordinate standardization
    std: np.ndarray
    m_r: int
    m_t: int
    config: GanConfig
    source_label: str = "alice"

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """Draw n spoofed CSI matrices, shape (n, m_r, m_t) complex."""
        gen = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            z = torch.randn(n, self.net.latent_dim, generator=gen)
            eps = (torch.randn(n, self.net.out_dim, generator=gen)
                   if self.net.log_sigma is not None else None)
            flat = self.net(z, eps).numpy().astype(np.float64)
        flat = flat * self.std + self.mean
        half = self.m_r * self.m_t
        return (flat[:, :half] + 1j * flat[:, half:]).reshape(n, self.m_r, self.m_t)


def flatten_csi(mats: np.ndarray) -> np.ndarray:
    n = mats.shape[0]
    flat = mats.reshape(n, -1)
    return np.concatenate([flat.real, flat.imag], axis=1)


def load_dataset(path) -> tuple[dict, np.ndarray, int, int]:
    header, mats = load_matrices(path)
    if mats.shape[0] < MIN_SAMPLES:
        raise GanError(f"dataset too small: {mats.shape[0]} < {MIN_SAMPLES} samples")
    return header, flatten_csi(mats), int(header["m_r"]), int(header["m_t"])


def train_gan(config: GanConfig) -> tuple[TrainedGenerator, list[dict]]:
    """Alternating adversarial training; deterministic under the config seed.

    Returns the trained generator and a per-epoch log with the held-out
    discriminator accuracy and mean generator loss.  Raises
    TrainingDiverged (log attached) if a loss goes non-finite.
    """
    header, data, m_r, m_t = load_dataset(config.dataset_path)
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)

    perm = rng.permutation(data.shape[0])
    n_hold = max(1, int(config.holdout_fraction * data.shape[0]))
    hold, train = data[perm[:n_hold]], data[perm[n_hold:]]
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std < 1e-12] = 1e-12
    train_t = torch.from_numpy(((train - mean) / std)).float()
    hold_t = torch.from_numpy(((hold - mean) / std)).float()

    dim = train_t.shape[1]
    gen = Generator(config.latent_dim, dim, config.gen_widths, config.output_noise)
    disc = Discriminator(dim, config.disc_widths)
    opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr_g, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr_d, betas=(0.5, 0.999))
    bce = nn.BCEWithLogitsLoss()

    log: list[dict] = []
    started = time.time()
    n_train = train_t.shape[0]
    for epoch in range(config.epochs):
        order = torch.from_numpy(rng.permutation(n_train))
        g_losses = []
        for start in range(0, n_train - config.batch_size + 1, config.batch_size):
            real = train_t[order[start:start + config.batch_size]]
            b = real.shape[0]

            z = torch.randn(b, config.latent_dim)
            fake = gen(z).detach()
            opt_d.zero_grad()
            loss_d = bce(disc(real), torch.ones(b)) + bce(disc(fake), torch.zeros(b))
            loss_d.backward()
            opt_d.step()

            z = torch.randn(b, config.latent_dim)
            opt_g.zero_grad()
            loss_g = bce(disc(gen(z)), torch.ones(b))
            loss_g.backward()
            opt_g.step()
            g_losses.append(loss_g.item())

        with torch.no_grad():
            z = torch.randn(hold_t.shape[0], config.latent_dim)
            fake_scores = disc(gen(z))
            real_scores = disc(hold_t)
            acc = 0.5 * (float((real_scores > 0).float().mean())
                         + float((fake_scores <= 0).float().mean()))
        entry = {"epoch": epoch + 1, "disc_holdout_accuracy": acc,
                 "gen_loss": float(np.mean(g_losses)),
                 "elapsed_s": round(time.time() - started, 2)}
        log.append(entry)
        if not (math.isfinite(entry["gen_loss"]) and math.isfinite(acc)):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}", log)

    trained = TrainedGenerator(net=gen.eval(), mean=mean, std=std, m_r=m_r, m_t=m_t,
                               config=config, source_label=str(header.get("label", "?")))
    return trained, log


def generate_trace(trained: TrainedGenerator, n: int, out_path, seed: int = 0) -> Path:
    """Emit n generated samples in the CSI trace format."""
    if n < 1:
        raise GanError("n must be >= 1")
    mats = trained.sample(n, seed=seed)
    meta = {
        "generator": "gan-mlp",
        "latent_dim": trained.config.latent_dim,
        "epochs": trained.config.epochs,
        "train_seed": trained.config.seed,
        "sample_seed": int(seed),
        "mimics": trained.source_label,
    }
    write_matrices(out_path, mats, label="eve", metadata=meta)
    return Path(out_path)


def save_model(trained: TrainedGenerator, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({
        "state_dict": trained.net.state_dict(),
        "mean": trained.mean,
        "std": trained.std,
        "m_r": trained.m_r,
        "m_t": trained.m_t,
        "config": trained.config.__dict__,
        "source_label": trained.source_label,
    }, path)
    return path


def load_model(path) -> TrainedGenerator:
    blob = torch.load(path, weights_only=False)
    config = GanConfig(**blob["config"])
    dim = 2 * blob["m_r"] * blob["m_t"]
    net = Generator(config.latent_dim, dim, config.gen_widths, config.output_noise)
    net.load_state_dict(blob["state_dict"])
    net.eval()
    return TrainedGenerator(net=net, mean=blob["mean"], std=blob["std"],
                            m_r=blob["m_r"], m_t=blob["m_t"], config=config,
                            source_label=blob["source_label"])
