"""Feature embeddings and per-state Gaussian emission statistics.

Complex observations are mapped to real vectors by a fixed seeded projection
with orthonormal rows.  In ``real-imag`` mode the map is linear, so Gaussian
channel observations give exactly Gaussian embeddings.  Emission statistics
support both batch calibration and exponential-moving-average adaptation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import CsiObservation
from .errors import ConfigError

MODES = ("real-imag", "mag-phase")


@dataclass(frozen=True)
class EncoderSpec:
    """Deterministic map from complex matrices to d-dimensional real vectors."""

    d: int
    m_r: int
    m_t: int
    mode: str
    projection: np.ndarray  # d x (2 * m_r * m_t), orthonormal rows
    seed: int

    def __post_init__(self):
        n_in = 2 * self.m_r * self.m_t
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.d > n_in or self.d < 1:
            raise ConfigError(f"d must lie in [1, {n_in}], got {self.d}")
        if self.projection.shape != (self.d, n_in):
            raise ConfigError(f"projection shape {self.projection.shape} != ({self.d}, {n_in})")
        gram = self.projection @ self.projection.T
        if np.max(np.abs(gram - np.eye(self.d))) > 1e-10:
            raise ConfigError("projection rows are not orthonormal")


@dataclass
class Embedding:
    t: int
    z: np.ndarray


def make_encoder_spec(m_r: int, m_t: int, d: int = 16, mode: str = "real-imag",
                      seed: int = 0) -> EncoderSpec:
    """Seeded random projection with orthonormal rows (QR of a Gaussian draw)."""
    n_in = 2 * m_r * m_t
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n_in, max(d, 1))))
    return EncoderSpec(d=d, m_r=m_r, m_t=m_t, mode=mode, projection=q[:, :d].T.copy(), seed=seed)


def flatten_observation(h: np.ndarray, mode: str) -> np.ndarray:
    flat = np.asarray(h).reshape(-1)  # row-major, matches the trace format
    if mode == "real-imag":
        return np.concatenate([flat.real, flat.imag])
    if mode == "mag-phase":
        return np.concatenate([np.abs(flat), np.angle(flat)])
    raise ConfigError(f"mode must be one of {MODES}")


def encode(obs: CsiObservation, spec: EncoderSpec) -> Embedding:
    if obs.h_hat.shape != (spec.m_r, spec.m_t):
        raise ConfigError(f"observation shape {obs.h_hat.shape} != ({spec.m_r}, {spec.m_t})")
    return Embedding(t=obs.t, z=spec.projection @ flatten_observation(obs.h_hat, spec.mode))


def encode_batch(h_stack: np.ndarray, spec: EncoderSpec) -> np.ndarray:
    """Vectorized encode for an (n, m_r, m_t) stack; returns (n, d)."""
    n = h_stack.shape[0]
    flat = h_stack.reshape(n, -1)
    if spec.mode == "real-imag":
        feats = np.concatenate([flat.real, flat.imag], axis=1)
    else:
        feats = np.concatenate([np.abs(flat), np.angle(flat)], axis=1)
    return feats @ spec.projection.T


@dataclass
class EmissionStats:
    """Gaussian emission parameters for one hidden state.

    ``sigma`` is kept symmetric; ``reg_eps * I`` is added whenever the
    covariance is factorized, so early EMA covariances (possibly singular)
    stay usable.
    """

    mu: np.ndarray
    sigma: np.ndarray
    beta: float = 0.995
    reg_eps: float = 1e-6
    state_label: int = 0
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)
    _chol_inv: np.ndarray | None = field(default=None, repr=False, compare=False)
    _logdet: float = field(default=0.0, repr=False, compare=False)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    def chol(self) -> tuple[np.ndarray, float]:
        """Cached Cholesky factor and log-determinant of sigma + reg_eps*I."""
        if self._chol is None:
            cov = self.sigma + self.reg_eps * np.eye(self.d)
            try:
                L = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise ConfigError("covariance is not positive definite after regularization") from exc
            self._chol = L
            self._chol_inv = np.linalg.inv(L)
            self._logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        return self._chol, self._logdet

    def log_pdf(self, z: np.ndarray) -> float:
        self.chol()
        y = self._chol_inv @ (z - self.mu)
        return -0.5 * (self.d * np.log(2.0 * np.pi) + self._logdet + float(y @ y))

    def log_pdf_batch(self, z: np.ndarray) -> np.ndarray:
        self.chol()
        y = self._chol_inv @ (z - self.mu).T
        return -0.5 * (self.d * np.log(2.0 * np.pi) + self._logdet + np.sum(y * y, axis=0))

    def with_beta(self, beta: float) -> "EmissionStats":
        return replace(self, beta=beta, _chol=self._chol, _chol_inv=self._chol_inv,
                       _logdet=self._logdet)

    def copy(self) -> "EmissionStats":
        return EmissionStats(self.mu.copy(), self.sigma.copy(), self.beta,
                             self.reg_eps, self.state_label)


def ema_update(stats: EmissionStats, z: Embedding | np.ndarray) -> EmissionStats:
    """One exponential-moving-average step on mean then covariance.

    The covariance update centers on the *updated* mean, which keeps it
    correctly centered and avoids the lag bias of using the previous mean.
    """
    zv = z.z if isinstance(z, Embedding) else np.asarray(z, dtype=np.float64)
    if zv.shape != stats.mu.shape:
        raise ConfigError(f"embedding shape {zv.shape} != stats dimension {stats.mu.shape}")
    b = stats.beta
    mu = b * stats.mu + (1.0 - b) * zv
    dev = zv - mu
    sigma = b * stats.sigma + (1.0 - b) * np.outer(dev, dev)
    return EmissionStats(mu=mu, sigma=sigma, beta=b, reg_eps=stats.reg_eps,
                         state_label=stats.state_label)


def fit_stats_batch(embeddings, reg_eps: float = 1e-6, beta: float = 0.995,
                    state_label: int = 0) -> EmissionStats:
    """Sample mean and covariance (denominator n) plus diagonal regularizer."""
    zs = np.asarray([e.z if isinstance(e, Embedding) else e for e in embeddings], dtype=np.float64)
    if zs.ndim != 2:
        raise ConfigError("embeddings must share a common dimension")
    n, d = zs.shape
    if n < d + 1:
        raise ConfigError(f"need at least d+1={d + 1} samples, got {n}")
    mu = zs.mean(axis=0)
    dev = zs - mu
    sigma = (dev.T @ dev) / n + reg_eps * np.eye(d)
    return EmissionStats(mu=mu, sigma=sigma, beta=beta, reg_eps=reg_eps, state_label=state_label)
