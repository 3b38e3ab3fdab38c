"""Sequential authentication engine.

Implements the independent-observation cumulative log-likelihood-ratio test,
2- and 3-state hidden-Markov forward inference in the log domain, the
closed-form recursive update of the log-posterior ratio, and the per-slot
session loop that couples inference with online adaptation of the emission
statistics.

State conventions: the last hidden state is always the spoofer.  In the
3-state chain, states 0 and 1 are the legitimate transmitter with line of
sight available and blocked, respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import Embedding, EmissionStats, ema_update
from .errors import ConfigError, NumericFault

DEFAULT_A2 = np.array([[0.95, 0.05],
                       [0.05, 0.95]])
DEFAULT_A3 = np.array([[0.93, 0.05, 0.02],
                       [0.10, 0.88, 0.02],
                       [0.02, 0.02, 0.96]])
DEFAULT_PI2 = np.array([0.7, 0.3])
DEFAULT_PI3 = np.array([0.45, 0.45, 0.1])


@dataclass(frozen=True)
class DecisionThresholds:
    gamma0: float
    gamma1: float

    def __post_init__(self):
        if not self.gamma0 < 0.0 < self.gamma1:
            raise ConfigError(
                f"thresholds must satisfy gamma0 < 0 < gamma1, got ({self.gamma0}, {self.gamma1})"
            )


@dataclass(frozen=True)
class Decision:
    verdict: str  # "alice" | "eve" | "continue"
    t: int
    lam: float


def wald_thresholds(alpha_fa: float, beta_md: float) -> DecisionThresholds:
    """Classical sequential-test thresholds for target error rates."""
    for name, val in (("alpha_fa", alpha_fa), ("beta_md", beta_md)):
        if not 0.0 < val < 0.5:
            raise ConfigError(f"{name} must lie strictly in (0, 0.5), got {val}")
    return DecisionThresholds(
        gamma0=math.log(beta_md / (1.0 - alpha_fa)),
        gamma1=math.log((1.0 - beta_md) / alpha_fa),
    )


def threshold_decision(lam: float, t: int, thr: DecisionThresholds) -> Decision:
    """Ties resolve toward the terminal verdicts (>= and <= are inclusive)."""
    if lam >= thr.gamma1:
        return Decision("alice", t, lam)
    if lam <= thr.gamma0:
        return Decision("eve", t, lam)
    return Decision("continue", t, lam)


@dataclass
class HmmModel:
    """Hidden-state chain with Gaussian emissions, one per state."""

    pi: np.ndarray
    a: np.ndarray
    emissions: list[EmissionStats]

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        n = self.n_states
        if n not in (2, 3):
            raise ConfigError(f"supported chains have 2 or 3 states, got {n}")
        if self.a.shape != (n, n):
            raise ConfigError(f"transition matrix shape {self.a.shape} != ({n}, {n})")
        if np.max(np.abs(self.a.sum(axis=1) - 1.0)) > 1e-12:
            raise ConfigError("transition matrix rows must sum to 1")
        if abs(self.pi.sum() - 1.0) > 1e-12:
            raise ConfigError("initial distribution must sum to 1")
        if np.any(self.a < 0) or np.any(self.pi < 0):
            raise ConfigError("probabilities must be nonnegative")
        if len(self.emissions) != n:
            raise ConfigError(f"need {n} emission models, got {len(self.emissions)}")
        with np.errstate(divide="ignore"):
            self._log_a = np.log(self.a)
            self._log_pi = np.log(self.pi).tolist()
        self._log_a_cols = [self._log_a[:, k].tolist() for k in range(n)]

    @property
    def n_states(self) -> int:
        return self.pi.shape[0]

    @property
    def eve_state(self) -> int:
        return self.n_states - 1

    def log_emissions(self, z: np.ndarray) -> np.ndarray:
        return np.array([e.log_pdf(z) for e in self.emissions])

    def clone_emissions(self) -> "HmmModel":
        return HmmModel(self.pi.copy(), self.a.copy(), [e.copy() for e in self.emissions])


@dataclass
class ForwardState:
    """Normalized log forward variables plus the running log-posterior ratio.

    ``t == 0`` denotes the pre-observation state holding the prior; the first
    update then applies the initialization rule instead of a transition.
    """

    t: int
    log_alpha: np.ndarray
    lam: float

    def posterior(self) -> np.ndarray:
        return np.exp(self.log_alpha)


def make_initial_forward(model: HmmModel) -> ForwardState:
    with np.errstate(divide="ignore"):
        la = np.log(model.pi)
    return ForwardState(t=0, log_alpha=la, lam=_ratio_from_log_alpha(la))


def _logsumexp(values: np.ndarray) -> float:
    m = np.max(values)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(values - m))))


def _logaddexp_many(vals) -> float:
    m = max(vals)
    if m == -math.inf:
        return -math.inf
    s = 0.0
    for v in vals:
        s += math.exp(v - m)
    return m + math.log(s)


def _ratio_from_log_alpha(la: np.ndarray) -> float:
    if la.shape[0] == 2:
        return float(la[0] - la[1])
    return float(np.logaddexp(la[0], la[1]) - la[2])


def gaussian_log_pdf(z: Embedding | np.ndarray, stats: EmissionStats) -> float:
    """Multivariate normal log-density, evaluated through a Cholesky factor."""
    zv = z.z if isinstance(z, Embedding) else np.asarray(z, dtype=np.float64)
    return stats.log_pdf(zv)


def instantaneous_llr(z: Embedding | np.ndarray, stats0: EmissionStats,
                      stats1: EmissionStats) -> float:
    """Per-sample log p(z | H0) - log p(z | H1)."""
    return gaussian_log_pdf(z, stats0) - gaussian_log_pdf(z, stats1)


def sprt_step(cum: float, z: Embedding | np.ndarray, stats0: EmissionStats,
              stats1: EmissionStats, thr: DecisionThresholds,
              t: int | None = None) -> tuple[float, Decision]:
    """Accumulate one log-likelihood ratio and test the thresholds."""
    if t is None:
        t = z.t if isinstance(z, Embedding) else 0
    cum = cum + instantaneous_llr(z, stats0, stats1)
    return cum, threshold_decision(cum, t, thr)


def hmm_forward_step(fwd: ForwardState, model: HmmModel, z: Embedding | np.ndarray,
                     log_emissions: np.ndarray | None = None) -> ForwardState:
    """One log-domain forward update; normalizes so exp(log_alpha) sums to 1.

    From the prior state (t == 0) this applies the initialization
    log alpha_1(k) = log pi_k + log p(z_1 | k); afterwards the full
    transition + emission recursion.  ``log_emissions`` may carry
    precomputed per-state log-densities to skip the Gaussian evaluations.
    """
    zv = z.z if isinstance(z, Embedding) else np.asarray(z, dtype=np.float64)
    if log_emissions is None:
        log_emissions = model.log_emissions(zv)
    le = log_emissions.tolist() if isinstance(log_emissions, np.ndarray) else list(log_emissions)
    if fwd.t == 0:
        la_list = [lp + le_k for lp, le_k in zip(model._log_pi, le)]
    else:
        prev = fwd.log_alpha.tolist()
        la_list = []
        for le_k, col in zip(le, model._log_a_cols):
            m = -math.inf
            terms = []
            for p_j, la_jk in zip(prev, col):
                v = p_j + la_jk
                terms.append(v)
                if v > m:
                    m = v
            if m == -math.inf:
                la_list.append(-math.inf)
            else:
                s = 0.0
                for v in terms:
                    s += math.exp(v - m)
                la_list.append(le_k + m + math.log(s))
    total = _logaddexp_many(la_list)
    if not math.isfinite(total):
        raise NumericFault(f"forward vector collapsed to -inf at t={fwd.t + 1}")
    la_list = [x - total for x in la_list]
    if len(la_list) == 2:
        lam = la_list[0] - la_list[1]
    else:
        lam = _logaddexp_many(la_list[:2]) - la_list[2]
    return ForwardState(t=fwd.t + 1, log_alpha=np.array(la_list), lam=lam)


def log_posterior_ratio(fwd: ForwardState, model: HmmModel) -> float:
    """2-state: log alpha(0) - log alpha(1); 3-state: both legitimate states
    against the spoofer state."""
    if model.n_states == 2:
        return float(fwd.log_alpha[0] - fwd.log_alpha[1])
    return float(np.logaddexp(fwd.log_alpha[0], fwd.log_alpha[1]) - fwd.log_alpha[2])


def recursive_llr_step(lambda_prev: float, ell_t: float, a) -> float:
    """Closed-form 2-state update: new ratio from the previous ratio and the
    instantaneous log-likelihood ratio, without touching forward variables."""
    a00, a01 = float(a[0][0]), float(a[0][1])
    a10, a11 = float(a[1][0]), float(a[1][1])
    if abs(a00 + a01 - 1.0) > 1e-12 or abs(a10 + a11 - 1.0) > 1e-12 or min(
            a00, a01, a10, a11) < 0:
        raise ConfigError("transition matrix must be 2x2 row-stochastic")
    if lambda_prev >= 0:
        r = 1.0 / (1.0 + math.exp(-lambda_prev))
    else:
        e = math.exp(lambda_prev)
        r = e / (1.0 + e)
    num = a00 * r + a10 * (1.0 - r)
    den = a01 * r + a11 * (1.0 - r)
    return ell_t + math.log(num / den)


@dataclass(frozen=True)
class EmaPolicy:
    """How emission statistics adapt during a session.

    ``trigger`` decides when the faster blockage forgetting factor is used:
    "oracle" consults the configured blockage schedule (including a
    ``recovery_slots`` tail after each interval, since the restored channel
    is just as abrupt a change as the loss), "posterior" switches when the
    blocked-state posterior exceeds 0.5 (3-state chains only), "none" always
    keeps ``beta_normal``.  The adapted state is the most probable one under
    the previous posterior, unless ``oracle_labels`` pins it to the true
    transmitter state (ablation mode).  The spoofer state is only adapted
    when ``adapt_eve`` is set.
    """

    beta_normal: float = 0.995
    beta_blockage: float = 0.9
    trigger: str = "oracle"
    recovery_slots: int = 15
    adapt_eve: bool = True
    adapt_confidence: float = 0.7
    oracle_labels: bool = False

    def __post_init__(self):
        if self.trigger not in ("oracle", "posterior", "none"):
            raise ConfigError("ema trigger must be oracle, posterior, or none")
        for name in ("beta_normal", "beta_blockage"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {b}")
        if not 0.0 <= self.adapt_confidence <= 1.0:
            raise ConfigError("adapt_confidence must lie in [0, 1]")


@dataclass
class SessionResult:
    decisions: list[Decision]
    trace: list[dict]
    first_decision: Decision | None
    lam_horizon: float
    posterior_horizon: np.ndarray

    def first_decision_time(self, horizon: int) -> int:
        """Slot of the first terminal verdict, censored at the horizon."""
        return self.first_decision.t if self.first_decision else horizon


class AuthSession:
    """Per-slot authentication loop over a stream of embeddings.

    ``variant`` is "sprt", "hmm2" or "hmm3".  ``decision_mode`` controls what
    happens after a terminal verdict: "monitor" keeps the statistic running
    (used for fixed-horizon scoring), "halt" stops the session, "reset"
    restarts the statistic from the prior and keeps deciding.
    """

    def __init__(self, variant: str, model: HmmModel, thresholds: DecisionThresholds,
                 ema: EmaPolicy | None = None, blocked_at=None,
                 decision_mode: str = "monitor"):
        if variant not in ("sprt", "hmm2", "hmm3"):
            raise ConfigError(f"unknown variant {variant!r}")
        if decision_mode not in ("monitor", "halt", "reset"):
            raise ConfigError(f"unknown decision mode {decision_mode!r}")
        if variant == "hmm3" and model.n_states != 3:
            raise ConfigError("hmm3 variant needs a 3-state model")
        if variant in ("sprt", "hmm2") and model.n_states != 2:
            raise ConfigError(f"{variant} variant needs a 2-state model")
        if ema and ema.trigger == "posterior" and variant != "hmm3":
            raise ConfigError("posterior blockage trigger needs the 3-state chain")
        self.variant = variant
        self.model = model.clone_emissions() if ema else model
        self.thresholds = thresholds
        self.ema = ema
        self.blocked_at = blocked_at or (lambda t: False)
        self.decision_mode = decision_mode
        self.fwd = make_initial_forward(self.model)
        self.cum = 0.0
        self.halted = False
        self.result = SessionResult([], [], None, 0.0, self.fwd.posterior())

    def _adapt(self, z: Embedding, true_state: int | None) -> None:
        ema = self.ema
        prev_post = self.fwd.posterior() if self.variant != "sprt" else None
        if ema.oracle_labels:
            if true_state is None:
                raise ConfigError("oracle-labeled adaptation needs true_state")
            target = true_state
        elif self.variant == "sprt":
            target = 0 if self.cum >= 0 else 1
        else:
            target = int(np.argmax(prev_post))
            # Ambiguous posteriors would smear samples across the wrong state.
            if prev_post[target] < ema.adapt_confidence:
                return
        if target == self.model.eve_state and not ema.adapt_eve:
            return
        if ema.trigger == "oracle":
            blocked = bool(self.blocked_at(z.t))
        elif ema.trigger == "posterior":
            blocked = prev_post is not None and prev_post[1] > 0.5
        else:
            blocked = False
        beta = ema.beta_blockage if blocked else ema.beta_normal
        stats = self.model.emissions[target]
        self.model.emissions[target] = ema_update(stats.with_beta(beta), z)

    def step(self, z: Embedding, true_state: int | None = None) -> Decision:
        if self.halted:
            raise ConfigError("session already halted")
        if self.ema is not None:
            self._adapt(z, true_state)
        if self.variant == "sprt":
            self.cum, decision = sprt_step(self.cum, z, self.model.emissions[0],
                                           self.model.emissions[1], self.thresholds, t=z.t)
            lam = self.cum
            posterior = np.array([_sigmoid(lam), 1.0 - _sigmoid(lam)])
        else:
            self.fwd = hmm_forward_step(self.fwd, self.model, z)
            lam = log_posterior_ratio(self.fwd, self.model)
            posterior = self.fwd.posterior()
            decision = threshold_decision(lam, z.t, self.thresholds)
        res = self.result
        res.decisions.append(decision)
        res.trace.append({"t": z.t, "lambda": lam,
                          "posterior": posterior.tolist(), "verdict": decision.verdict})
        res.lam_horizon = lam
        res.posterior_horizon = posterior
        if decision.verdict != "continue":
            if res.first_decision is None:
                res.first_decision = decision
            if self.decision_mode == "halt":
                self.halted = True
            elif self.decision_mode == "reset":
                self.fwd = make_initial_forward(self.model)
                self.cum = 0.0
        return decision


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def run_session(config, identity: str = "alice", trial: int = 0) -> SessionResult:
    """Run one full authenticated session described by a scenario config.

    Calibrates (or reuses) emission statistics, streams observations from the
    configured transmitter, and applies the per-slot loop: encode, optionally
    adapt, forward update, threshold decision.
    """
    from .harness import build_session

    session, stream = build_session(config, identity, trial)
    for z, true_state in stream:
        session.step(z, true_state)
        if session.halted:
            break
    return session.result
