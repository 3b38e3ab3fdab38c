"""Spoofed-CSI generation under three threat models.

A naive spoofer simply transmits over its own (spatially distinct) channel.
The moment-matching spoofer eavesdrops the legitimate stream and mimics it
with an entrywise complex Gaussian fitted by exponential moving averages; it
deliberately ignores spatial correlation, keeping it strictly weaker than a
trained generative attacker.  The trace spoofer replays matrices produced
offline (e.g. by the companion generator trainer) from a trace file.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, ChannelSession, CsiObservation, complex_gaussian, seed_list
from .errors import ConfigError, TraceFormatError, TraceExhaustedError
from . import traceio

VARIANTS = ("naive", "moment-matching", "trace")


@dataclass(frozen=True)
class SpooferKind:
    """Threat-model selector plus its variant-specific knobs."""

    variant: str = "naive"
    beta_e: float = 0.98            # moment-matching forgetting factor
    observation_noise: float | None = None  # eavesdrop noise; None = victim's
    trace_path: str | None = None
    replay: str = "sequential"      # or "loop"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"spoofer variant must be one of {VARIANTS}")
        if not 0.0 <= self.beta_e < 1.0:
            raise ConfigError(f"beta_e must lie in [0, 1), got {self.beta_e}")
        if self.replay not in ("sequential", "loop"):
            raise ConfigError("replay policy must be 'sequential' or 'loop'")
        if self.variant == "trace" and not self.trace_path:
            raise ConfigError("trace spoofer needs trace_path")


@dataclass
class SpoofTrace:
    header: dict
    records: list[np.ndarray]

    @property
    def m_t(self) -> int:
        return int(self.header["m_t"])

    @property
    def m_r(self) -> int:
        return int(self.header["m_r"])


def load_trace(path) -> SpoofTrace:
    """Parse and validate a spoof trace; dimension errors carry line numbers."""
    header, records = traceio.load_csi_trace(path)
    if not records:
        raise TraceFormatError("spoof trace has no records")
    return SpoofTrace(header=header, records=[h for _, h in records])


class Spoofer:
    """Stateful spoofed-CSI source; one instance per session."""

    def next(self, eavesdropped: CsiObservation | None = None, t: int = 0) -> CsiObservation:
        raise NotImplementedError

    def feed(self, eavesdropped: CsiObservation) -> None:
        """Absorb one eavesdropped observation (no-op unless adaptive)."""


class NaiveSpoofer(Spoofer):
    def __init__(self, eve_params: ChannelParams, seed=0):
        self.session = ChannelSession(eve_params, identity="eve", seed=seed)

    def next(self, eavesdropped=None, t: int = 0) -> CsiObservation:
        return self.session.next_observation()


class MomentMatchingSpoofer(Spoofer):
    """Entrywise complex Gaussian mimic fitted online to eavesdropped CSI.

    Falls back to the naive channel until it has seen at least m_t * m_r
    samples.  The fit tracks the mean matrix and per-entry variance only.
    """

    def __init__(self, kind: SpooferKind, eve_params: ChannelParams, seed=0):
        self.kind = kind
        self.eve_params = eve_params
        self.beta_e = kind.beta_e
        self.fallback = NaiveSpoofer(eve_params, seed)
        self.rng = np.random.default_rng(seed_list(seed) + [2])
        shape = (eve_params.m_r, eve_params.m_t)
        self.mean = np.zeros(shape, dtype=np.complex128)
        self.var = np.zeros(shape, dtype=np.float64)
        self.n_seen = 0
        self.min_samples = eve_params.m_r * eve_params.m_t

    def spawn(self, seed) -> "MomentMatchingSpoofer":
        """Clone with the fitted moments but a fresh sampling stream."""
        other = MomentMatchingSpoofer(self.kind, self.eve_params, seed)
        other.mean = self.mean.copy()
        other.var = self.var.copy()
        other.n_seen = self.n_seen
        return other

    def feed(self, eavesdropped: CsiObservation) -> None:
        x = eavesdropped.h_hat
        if x.shape != self.mean.shape:
            raise ConfigError(f"eavesdropped shape {x.shape} != {self.mean.shape}")
        b = self.beta_e if self.n_seen > 0 else 0.0
        self.mean = b * self.mean + (1.0 - b) * x
        self.var = b * self.var + (1.0 - b) * np.abs(x - self.mean) ** 2
        self.n_seen += 1

    def next(self, eavesdropped=None, t: int = 0) -> CsiObservation:
        if eavesdropped is not None:
            self.feed(eavesdropped)
        if self.n_seen < self.min_samples:
            return self.fallback.next(t=t)
        noise = complex_gaussian(self.rng, self.mean.shape) * np.sqrt(self.var)
        return CsiObservation(t=t, h_hat=self.mean + noise)


class TraceSpoofer(Spoofer):
    def __init__(self, trace: SpoofTrace, replay: str = "sequential", start: int = 0):
        if replay not in ("sequential", "loop"):
            raise ConfigError("replay policy must be 'sequential' or 'loop'")
        self.trace = trace
        self.replay = replay
        self.cursor = int(start) % len(trace.records) if replay == "loop" else int(start)

    def next(self, eavesdropped=None, t: int = 0) -> CsiObservation:
        n = len(self.trace.records)
        if self.cursor >= n:
            if self.replay == "sequential":
                raise TraceExhaustedError(
                    f"trace exhausted after {n} records (sequential replay)")
            self.cursor %= n
        h = self.trace.records[self.cursor]
        self.cursor += 1
        return CsiObservation(t=t, h_hat=h.copy())


def make_spoofer(kind: SpooferKind, eve_params: ChannelParams, seed: int = 0,
                 trace: SpoofTrace | None = None, start: int = 0) -> Spoofer:
    if kind.variant == "naive":
        return NaiveSpoofer(eve_params, seed)
    if kind.variant == "moment-matching":
        return MomentMatchingSpoofer(kind, eve_params, seed)
    trace = trace if trace is not None else load_trace(kind.trace_path)
    return TraceSpoofer(trace, kind.replay, start=start)


def next_spoofed_csi(spoofer: Spoofer, eavesdropped: CsiObservation | None = None,
                     t: int = 0) -> CsiObservation:
    """Pull the next spoofed observation from a stateful spoofer."""
    return spoofer.next(eavesdropped, t)
