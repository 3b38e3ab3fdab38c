"""Time- and spatially-correlated MIMO channel simulator.

The channel of each transmitter evolves as a first-order Gauss-Markov process
on the whitened matrix, gets spatial structure through transmit/receive
correlation square roots (Kronecker model), and is mixed with a deterministic
line-of-sight component through a time-varying Rician factor.  Scheduled
blockage intervals force the Rician factor to zero so only the diffuse part
survives.  The receiver finally sees the matrix plus white complex noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import ConfigError

IDENTITY_TAGS = {"alice": 0, "eve": 1}


def seed_list(seed) -> list[int]:
    """Normalize an int or sequence seed into an entropy list."""
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


@dataclass(frozen=True)
class ChannelParams:
    """Static description of one transmitter-receiver link.

    ``blockage`` is a list of ``(t_b, T_block)`` pairs; the line of sight is
    lost for every slot ``t`` with ``t_b <= t <= t_b + T_block``.  Intervals
    are sorted and merged on construction so they never overlap.
    """

    m_t: int = 4
    m_r: int = 4
    rho_t: float = 0.7
    r_tx: float = 0.5
    r_rx: float = 0.5
    noise_var: float = 10 ** -0.5
    k0: float = 10.0
    sigma_phi: float = 0.0
    los_angles: tuple[float, float] = (0.35, -0.2)  # (departure, arrival) rad
    blockage: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.m_t < 1 or self.m_r < 1:
            raise ConfigError("antenna counts must be >= 1")
        if not 0.0 <= self.rho_t <= 1.0:
            raise ConfigError(f"rho_t must lie in [0, 1], got {self.rho_t}")
        for name in ("r_tx", "r_rx"):
            r = getattr(self, name)
            if not 0.0 <= r < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {r}")
        if self.noise_var < 0:
            raise ConfigError("noise_var must be >= 0")
        if self.k0 < 0:
            raise ConfigError("k0 must be >= 0")
        if self.sigma_phi < 0:
            raise ConfigError("sigma_phi must be >= 0")
        object.__setattr__(self, "blockage", _normalize_blockage(self.blockage))

    def is_blocked(self, t: int) -> bool:
        return any(t_b <= t <= t_b + dur for t_b, dur in self.blockage)

    def rician_factor(self, t: int) -> float:
        """Piecewise K(t): the nominal factor, or 0 inside a blockage."""
        return 0.0 if self.is_blocked(t) else self.k0


@dataclass
class ChannelState:
    """Latent channel of one transmitter at slot ``t``."""

    t: int
    h_w: np.ndarray      # whitened diffuse matrix, m_r x m_t complex
    h_los: np.ndarray    # line-of-sight matrix, m_r x m_t complex
    k_now: float

    def check_shape(self, params: ChannelParams) -> None:
        expected = (params.m_r, params.m_t)
        if self.h_w.shape != expected or self.h_los.shape != expected:
            raise ConfigError(
                f"state matrices {self.h_w.shape} do not match params {expected}"
            )


@dataclass
class CsiObservation:
    """Noisy channel matrix as seen by the receiver at slot ``t``."""

    t: int
    h_hat: np.ndarray


def _normalize_blockage(intervals) -> tuple[tuple[int, int], ...]:
    items = []
    for t_b, dur in intervals:
        t_b, dur = int(t_b), int(dur)
        if t_b < 1:
            raise ConfigError(f"blockage start must be >= 1, got {t_b}")
        if dur < 0:
            raise ConfigError(f"blockage duration must be >= 0, got {dur}")
        items.append((t_b, t_b + dur))
    items.sort()
    merged: list[list[int]] = []
    for lo, hi in items:
        if merged and lo <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return tuple((lo, hi - lo) for lo, hi in merged)


def complex_gaussian(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian, per-entry variance ``var``.

    The variance is split equally between real and imaginary parts.
    """
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def exp_correlation_matrix(n: int, r: float) -> np.ndarray:
    """Exponential (single-parameter ULA) correlation matrix, entry r^|i-j|."""
    if n < 1:
        raise ConfigError(f"matrix size must be >= 1, got {n}")
    if not 0.0 <= r < 1.0:
        raise ConfigError(f"correlation coefficient must lie in [0, 1), got {r}")
    idx = np.arange(n)
    return (r ** np.abs(idx[:, None] - idx[None, :])).astype(np.complex128)


@lru_cache(maxsize=64)
def _corr_sqrt_cached(n: int, r: float) -> np.ndarray:
    mat = exp_correlation_matrix(n, r)
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals.real, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.conj().T
    root.flags.writeable = False
    return root


def correlation_sqrt(n: int, r: float) -> np.ndarray:
    """Principal Hermitian square root of ``exp_correlation_matrix(n, r)``."""
    return _corr_sqrt_cached(n, float(r))


def steering_vector(n: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA steering vector, unit-modulus entries."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def init_channel(params: ChannelParams, identity: str = "alice", seed: int = 0) -> ChannelState:
    """Stationary initial state: diffuse part from its stationary law, LoS as
    a steering outer product with ||h_los||_F^2 = m_t * m_r."""
    if identity not in IDENTITY_TAGS:
        raise ConfigError(f"identity must be one of {sorted(IDENTITY_TAGS)}")
    rng = np.random.default_rng(seed_list(seed) + [IDENTITY_TAGS[identity]])
    h_w = complex_gaussian(rng, (params.m_r, params.m_t))
    dep, arr = params.los_angles
    h_los = np.outer(steering_vector(params.m_r, arr), steering_vector(params.m_t, dep).conj())
    return ChannelState(t=0, h_w=h_w, h_los=h_los, k_now=params.rician_factor(0))


def step_whitened(state: ChannelState, params: ChannelParams, rng: np.random.Generator) -> ChannelState:
    """Advance the whitened diffuse matrix one slot.

    vec(h_w) <- rho_t * vec(h_w) + w with w ~ CN(0, (1 - rho_t^2) I), so the
    per-entry stationary variance stays 1.
    """
    state.check_shape(params)
    rho = params.rho_t
    noise = complex_gaussian(rng, state.h_w.shape, max(0.0, 1.0 - rho * rho))
    return replace(state, t=state.t + 1, h_w=rho * state.h_w + noise)


def step_los(state: ChannelState, params: ChannelParams, rng: np.random.Generator) -> ChannelState:
    """Apply one slot of slow phase drift to the LoS matrix (norm preserving)."""
    if params.sigma_phi == 0.0:
        return state
    phi = params.sigma_phi * rng.standard_normal()
    return replace(state, h_los=state.h_los * np.exp(1j * phi))


def apply_spatial_correlation(h_w: np.ndarray, r_rx_sqrt: np.ndarray, r_tx_sqrt: np.ndarray) -> np.ndarray:
    """Kronecker spatial shaping: R_r^{1/2} . h_w . R_t^{1/2}.

    Accepts a single matrix or a stack with the matrix in the last two axes.
    """
    if r_rx_sqrt.shape[1] != h_w.shape[-2] or r_tx_sqrt.shape[0] != h_w.shape[-1]:
        raise ConfigError("square-root factor dimensions do not match the channel matrix")
    return r_rx_sqrt @ h_w @ r_tx_sqrt

def compose_rician(state: ChannelState, t: int, params: ChannelParams) -> np.ndarray:
    """Mix LoS and spatially correlated diffuse parts at slot ``t``.

    The Rician factor is the nominal k0, or exactly 0 inside a blockage
    interval, in which case the LoS term vanishes identically.
    """
    k = params.rician_factor(t)
    nlos = apply_spatial_correlation(
        state.h_w,
        correlation_sqrt(params.m_r, params.r_rx),
        correlation_sqrt(params.m_t, params.r_tx),
    )
    if k == 0.0:
        return nlos
    return np.sqrt(k / (k + 1.0)) * state.h_los + np.sqrt(1.0 / (k + 1.0)) * nlos


def observe(h: np.ndarray, noise_var: float, rng: np.random.Generator, t: int = 0) -> CsiObservation:
    """Receiver-side observation: the matrix plus white complex noise."""
    if noise_var < 0:
        raise ConfigError("noise_var must be >= 0")
    if noise_var == 0.0:
        return CsiObservation(t=t, h_hat=h.copy())
    return CsiObservation(t=t, h_hat=h + complex_gaussian(rng, h.shape, noise_var))


class ChannelSession:
    """One transmitter's channel trajectory, stepped slot by slot.

    Owns its state and RNG; independent sessions with distinct seeds can run
    concurrently.  ``next_observation()`` advances the latent state, composes
    the Rician mixture for the new slot and returns the noisy observation.
    """

    def __init__(self, params: ChannelParams, identity: str = "alice", seed=0):
        self.params = params
        self.identity = identity
        self.state = init_channel(params, identity, seed)
        self.rng = np.random.default_rng(seed_list(seed) + [IDENTITY_TAGS[identity], 1])

    def next_observation(self) -> CsiObservation:
        self.state = step_whitened(self.state, self.params, self.rng)
        self.state = step_los(self.state, self.params, self.rng)
        t = self.state.t
        h = compose_rician(self.state, t, self.params)
        self.state.k_now = self.params.rician_factor(t)
        return observe(h, self.params.noise_var, self.rng, t=t)

    def run(self, n: int) -> list[CsiObservation]:
        return [self.next_observation() for _ in range(n)]
