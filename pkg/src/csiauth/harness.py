"""Experiment runner: scenario definitions, calibration, Monte Carlo
campaigns, ROC/AUC computation, and report/dataset export.

Seed discipline: every random stream is derived from the scenario master seed
through ``default_rng([master_seed, STREAM, index...])`` with the stream tags
below, so trials are reproducible and order-independent.

    10  calibration, legitimate LoS stream
    11  calibration, legitimate NLoS (blocked) stream
    12  spoofer warm-up (eavesdropping target stream)
    13  spoofer warm-up (spoofer-side randomness)
    14  calibration, spoofer sampling
    20  per-trial legitimate stream  [20, trial]
    21  per-trial spoofer stream     [21, trial]
    30  dataset export
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ChannelParams, ChannelSession
from .detector import (DEFAULT_A2, DEFAULT_A3, DEFAULT_PI2, DEFAULT_PI3, AuthSession,
                       DecisionThresholds, EmaPolicy, HmmModel, wald_thresholds)
from .embedding import EncoderSpec, encode, fit_stats_batch, make_encoder_spec
from .errors import ConfigError, CsiAuthError
from .spoofing import (MomentMatchingSpoofer, NaiveSpoofer, Spoofer, SpooferKind,
                       SpoofTrace, TraceSpoofer, load_trace)
from . import traceio

EVE_ANGLE_OFFSET = math.radians(30.0)

STREAM_CALIB_LOS = 10
STREAM_CALIB_NLOS = 11
STREAM_EAVES_TARGET = 12
STREAM_EAVES_SELF = 13
STREAM_CALIB_EVE = 14
STREAM_TRIAL_ALICE = 20
STREAM_TRIAL_EVE = 21
STREAM_EXPORT = 30


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one experiment."""

    name: str = "scenario"
    alice: ChannelParams = field(default_factory=ChannelParams)
    eve: ChannelParams | None = None
    variant: str = "hmm2"                   # sprt | hmm2 | hmm3
    ema: EmaPolicy | None = None
    spoofer: SpooferKind = field(default_factory=SpooferKind)
    thresholds: DecisionThresholds | None = None
    wald_targets: tuple[float, float] | None = (0.05, 0.05)
    horizon: int = 50
    trials: int = 500
    seed: int = 1
    out_dir: str | None = None
    encoder_d: int = 16
    encoder_mode: str = "real-imag"
    encoder_seed: int = 0
    pi: np.ndarray | None = None
    transition: np.ndarray | None = None
    calib_slots: int = 200
    spoofer_warmup: int = 500
    reg_eps: float = 1e-6
    decision_mode: str = "monitor"

    def __post_init__(self):
        if self.variant not in ("sprt", "hmm2", "hmm3"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.eve is None:
            object.__setattr__(self, "eve", default_eve_params(self.alice))
        if self.thresholds is None:
            if self.wald_targets is None:
                raise ConfigError("need explicit thresholds or wald targets")
            object.__setattr__(self, "thresholds", wald_thresholds(*self.wald_targets))

    @property
    def n_states(self) -> int:
        return 3 if self.variant == "hmm3" else 2

    def initial_distribution(self) -> np.ndarray:
        if self.pi is not None:
            return np.asarray(self.pi, dtype=np.float64)
        return DEFAULT_PI3.copy() if self.n_states == 3 else DEFAULT_PI2.copy()

    def transition_matrix(self) -> np.ndarray:
        if self.transition is not None:
            return np.asarray(self.transition, dtype=np.float64)
        return DEFAULT_A3.copy() if self.n_states == 3 else DEFAULT_A2.copy()

    def encoder_spec(self) -> EncoderSpec:
        return make_encoder_spec(self.alice.m_r, self.alice.m_t, self.encoder_d,
                                 self.encoder_mode, self.encoder_seed)


def default_eve_params(alice: ChannelParams) -> ChannelParams:
    """Spatially distinct spoofer: LoS angles offset, no blockage schedule."""
    dep, arr = alice.los_angles
    return replace(alice, los_angles=(dep + EVE_ANGLE_OFFSET, arr + EVE_ANGLE_OFFSET),
                   blockage=())


DEFAULT_SIGMA_PHI = 0.0075
DEFAULT_BLOCKAGE = ((34, 14),)
DEFAULT_EAVES_FACTOR = 2.0  # spoofer's eavesdrop noise relative to the victim's


def default_scenario(name: str, **overrides) -> ScenarioConfig:
    """The canonical six-scenario battery plus aliases.

    The spoofer is the moment-matching mimic whose eavesdropping link is
    noisier than the victim's (it observes from a worse vantage point); the
    legitimate channel carries slow LoS phase drift, and blockage scenarios
    lose the LoS late in the session.
    """
    clean = ChannelParams(sigma_phi=DEFAULT_SIGMA_PHI)
    blocked = ChannelParams(sigma_phi=DEFAULT_SIGMA_PHI, blockage=DEFAULT_BLOCKAGE)
    base = dict(
        alice=clean,
        spoofer=SpooferKind("moment-matching",
                            observation_noise=DEFAULT_EAVES_FACTOR * clean.noise_var),
    )
    presets = {
        "sprt-los": dict(variant="sprt"),
        "hmm2-los": dict(variant="hmm2"),
        "hmm2-blockage": dict(variant="hmm2", alice=blocked),
        "hmm3-blockage": dict(variant="hmm3", alice=blocked),
        "hmm2-los-ema": dict(variant="hmm2", ema=EmaPolicy()),
        "hmm2-blockage-ema": dict(variant="hmm2", ema=EmaPolicy(), alice=blocked),
        "hmm3-blockage-ema": dict(variant="hmm3", ema=EmaPolicy(), alice=blocked),
    }
    if name not in presets:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(presets)}")
    kwargs = {**base, **presets[name], "name": name, **overrides}
    return ScenarioConfig(**kwargs)


SWEEP_SCENARIOS = ("hmm2-los", "hmm2-blockage", "hmm3-blockage",
                   "hmm2-los-ema", "hmm2-blockage-ema", "hmm3-blockage-ema")


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

@dataclass
class Calibration:
    encoder: EncoderSpec
    model: HmmModel
    spoofer_template: Spoofer | None     # fitted mimic / shared trace
    trace: SpoofTrace | None
    trace_offset: int


def _collect_embeddings(session: ChannelSession, spec: EncoderSpec, n: int) -> list:
    return [encode(session.next_observation(), spec) for _ in range(n)]


def _fit(embeddings, config: ScenarioConfig, label: int, beta: float):
    return fit_stats_batch(embeddings, reg_eps=config.reg_eps, beta=beta,
                           state_label=label)


def calibrate(config: ScenarioConfig) -> Calibration:
    """Fit per-state emission statistics from labeled warm-up streams.

    Legitimate statistics come from clean streams (blockage-free for the LoS
    state, always-blocked for the NLoS state); spoofer statistics from the
    configured threat model itself.
    """
    spec = config.encoder_spec()
    beta = config.ema.beta_normal if config.ema else 0.995
    seed = config.seed

    los_params = replace(config.alice, blockage=())
    los_stream = ChannelSession(los_params, "alice", [seed, STREAM_CALIB_LOS])
    stats = [_fit(_collect_embeddings(los_stream, spec, config.calib_slots), config, 0, beta)]

    if config.n_states == 3:
        nlos_params = replace(config.alice, k0=0.0, blockage=())
        nlos_stream = ChannelSession(nlos_params, "alice", [seed, STREAM_CALIB_NLOS])
        stats.append(_fit(_collect_embeddings(nlos_stream, spec, config.calib_slots),
                          config, 1, beta))

    spoofer_template, trace, trace_offset = _warm_spoofer(config)
    eve_sampler = _trial_spoofer(config, spoofer_template, trace, trace_offset,
                                 trial=None)
    eve_obs = [eve_sampler.next(t=t + 1) for t in range(config.calib_slots)]
    if trace is not None:
        trace_offset += config.calib_slots
    stats.append(_fit([encode(o, spec) for o in eve_obs], config,
                      config.n_states - 1, beta))

    model = HmmModel(pi=config.initial_distribution(), a=config.transition_matrix(),
                     emissions=stats)
    return Calibration(encoder=spec, model=model, spoofer_template=spoofer_template,
                       trace=trace, trace_offset=trace_offset)


def _warm_spoofer(config: ScenarioConfig):
    """Build and (where applicable) pre-fit the spoofer shared state."""
    kind = config.spoofer
    if kind.variant == "naive":
        return None, None, 0
    if kind.variant == "trace":
        return None, load_trace(kind.trace_path), 0
    noise = kind.observation_noise
    eaves_params = replace(config.alice, blockage=(),
                           noise_var=config.alice.noise_var if noise is None else noise)
    target = ChannelSession(eaves_params, "alice", [config.seed, STREAM_EAVES_TARGET])
    spoofer = MomentMatchingSpoofer(kind, config.eve, [config.seed, STREAM_EAVES_SELF])
    for _ in range(config.spoofer_warmup):
        spoofer.feed(target.next_observation())
    return spoofer, None, 0


def _trial_spoofer(config: ScenarioConfig, template, trace, trace_offset, trial):
    """Per-trial spoofed-CSI source with its own random stream."""
    kind = config.spoofer
    seed = ([config.seed, STREAM_CALIB_EVE] if trial is None
            else [config.seed, STREAM_TRIAL_EVE, trial])
    if kind.variant == "naive":
        return NaiveSpoofer(config.eve, seed)
    if kind.variant == "moment-matching":
        return template.spawn(seed)
    start = trace_offset + (0 if trial is None else trial * config.horizon)
    return TraceSpoofer(trace, replay=kind.replay, start=start)


# ---------------------------------------------------------------------------
# Sessions and trials
# ---------------------------------------------------------------------------

def _alice_true_state(config: ScenarioConfig, t: int) -> int:
    if config.n_states == 3 and config.alice.is_blocked(t):
        return 1
    return 0


def blockage_hint(params: ChannelParams, recovery_slots: int = 0):
    """Oracle trigger: inside a blockage interval or shortly after one ends."""

    def hint(t: int) -> bool:
        for t_b, dur in params.blockage:
            if t_b <= t <= t_b + dur + recovery_slots:
                return True
        return False

    return hint


def build_session(config: ScenarioConfig, identity: str, trial: int = 0,
                  calibration: Calibration | None = None):
    """(AuthSession, embedding stream) for one session; used by run_session."""
    calib = calibration or calibrate(config)
    recovery = config.ema.recovery_slots if config.ema else 0
    session = AuthSession(config.variant, calib.model, config.thresholds,
                          ema=config.ema,
                          blocked_at=blockage_hint(config.alice, recovery),
                          decision_mode=config.decision_mode)

    def stream():
        spec = calib.encoder
        if identity == "alice":
            chan = ChannelSession(config.alice, "alice",
                                  [config.seed, STREAM_TRIAL_ALICE, trial])
            for t in range(1, config.horizon + 1):
                yield encode(chan.next_observation(), spec), _alice_true_state(config, t)
        else:
            spoofer = _trial_spoofer(config, calib.spoofer_template, calib.trace,
                                     calib.trace_offset, trial)
            eve_state = config.n_states - 1
            for t in range(1, config.horizon + 1):
                yield encode(spoofer.next(t=t), spec), eve_state

    return session, stream()


def _run_one(config: ScenarioConfig, calib: Calibration, identity: str, trial: int):
    session, stream = build_session(config, identity, trial, calib)
    for z, true_state in stream:
        session.step(z, true_state)
        if session.halted:
            break
    return session.result


# ---------------------------------------------------------------------------
# ROC / AUC
# ---------------------------------------------------------------------------

def compute_roc_auc(scores_alice, scores_eve) -> tuple[list[tuple[float, float]], float]:
    """Threshold sweep over the score union; AUC by midrank Mann-Whitney.

    Scores are "legitimacy" scores: the true-positive rate is the fraction of
    legitimate sessions at or above the threshold.  The trapezoidal area of
    the returned curve equals the normalized U statistic exactly.
    """
    sa = np.asarray(scores_alice, dtype=np.float64)
    se = np.asarray(scores_eve, dtype=np.float64)
    if sa.size == 0 or se.size == 0:
        raise ConfigError("compute_roc_auc needs non-empty score lists")
    thresholds = np.unique(np.concatenate([sa, se]))[::-1]
    tpr = [0.0]
    fpr = [0.0]
    for thr in thresholds:
        tpr.append(float(np.mean(sa >= thr)))
        fpr.append(float(np.mean(se >= thr)))
    tpr.append(1.0)
    fpr.append(1.0)
    roc = list(zip(fpr, tpr))
    auc = float(np.trapezoid([p[1] for p in roc], [p[0] for p in roc]))
    return roc, auc


def scores_from_llr_traces(paths) -> np.ndarray:
    """Terminal statistic of each exported per-session log-ratio trace.

    Lets ROC/CDF computation run offline from files written with
    ``traceio.write_llr_trace``.
    """
    out = []
    for p in paths:
        _, rows = traceio.read_jsonl(p)
        if not rows:
            raise ConfigError(f"log-ratio trace {p} has no records")
        out.append(float(rows[-1]["lambda"]))
    return np.asarray(out)


def auc_pairwise(scores_alice, scores_eve) -> float:
    """Brute-force pairwise AUC oracle: wins + half-ties over all pairs."""
    sa = np.asarray(scores_alice)[:, None]
    se = np.asarray(scores_eve)[None, :]
    wins = np.sum(sa > se) + 0.5 * np.sum(sa == se)
    return float(wins / (sa.size * se.size))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

REPORT_SCHEMA_VERSION = 1


@dataclass
class RunReport:
    scenario: str
    roc: list[tuple[float, float]]
    auc: float
    mean_decision_time: dict        # slots to the first terminal verdict (censored)
    decisions_within_horizon: dict  # mean terminal-verdict count (reset mode)
    decided_fraction: dict
    posterior_cdf: dict
    scores: dict
    metadata: dict

    def __post_init__(self):
        fprs = [p[0] for p in self.roc]
        tprs = [p[1] for p in self.roc]
        if any(b < a - 1e-12 for a, b in zip(fprs, fprs[1:])):
            raise ConfigError("ROC points must be sorted by false-positive rate")
        if any(b < a - 1e-12 for a, b in zip(tprs, tprs[1:])):
            raise ConfigError("ROC curve must be monotone")
        area = float(np.trapezoid(tprs, fprs))
        if abs(area - self.auc) > 1e-9:
            raise ConfigError(f"AUC {self.auc} inconsistent with ROC area {area}")


def run_scenario(config: ScenarioConfig) -> RunReport:
    """Monte Carlo campaign: ``trials`` legitimate and ``trials`` spoofed
    sessions with per-trial seeds; fixed-horizon scores feed the ROC."""
    started = time.time()
    calib = calibrate(config)
    scores = {"alice": np.empty(config.trials), "eve": np.empty(config.trials)}
    dtimes = {"alice": np.empty(config.trials), "eve": np.empty(config.trials)}
    counts = {"alice": np.empty(config.trials), "eve": np.empty(config.trials)}
    decided = {"alice": 0, "eve": 0}
    posterior = {"alice": np.empty(config.trials), "eve": np.empty(config.trials)}
    for identity in ("alice", "eve"):
        for trial in range(config.trials):
            try:
                res = _run_one(config, calib, identity, trial)
            except CsiAuthError as exc:
                raise type(exc)(
                    f"{config.name}: {identity} trial {trial} failed: {exc}") from exc
            scores[identity][trial] = res.lam_horizon
            dtimes[identity][trial] = res.first_decision_time(config.horizon)
            counts[identity][trial] = sum(d.verdict != "continue" for d in res.decisions)
            decided[identity] += res.first_decision is not None
            posterior[identity][trial] = float(np.sum(res.posterior_horizon[:-1]))
    roc, auc = compute_roc_auc(scores["alice"], scores["eve"])
    return RunReport(
        scenario=config.name,
        roc=roc,
        auc=auc,
        mean_decision_time={k: float(v.mean()) for k, v in dtimes.items()},
        decisions_within_horizon={k: float(v.mean()) for k, v in counts.items()},
        decided_fraction={k: decided[k] / config.trials for k in decided},
        posterior_cdf={k: np.sort(v).tolist() for k, v in posterior.items()},
        scores={k: v.tolist() for k, v in scores.items()},
        metadata={
            "schema_version": REPORT_SCHEMA_VERSION,
            "variant": config.variant,
            "ema": config.ema is not None,
            "spoofer": config.spoofer.variant,
            "trials": config.trials,
            "horizon": config.horizon,
            "seed": config.seed,
            "thresholds": [config.thresholds.gamma0, config.thresholds.gamma1],
            "blockage": list(config.alice.blockage),
            "runtime_s": round(time.time() - started, 3),
        },
    )


def run_scenario_seeds(config: ScenarioConfig, seeds) -> tuple[list[RunReport], float]:
    """Run the same scenario under several master seeds; mean AUC."""
    reports = [run_scenario(replace(config, seed=int(s))) for s in seeds]
    return reports, float(np.mean([r.auc for r in reports]))


def emit_report(report: RunReport, fmt: str, path) -> Path:
    """Write a report as csv or json-lines with a fixed, versioned schema."""
    if not report.roc:
        raise ConfigError("report has an empty ROC")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        lines = ["kind,key,x,y"]
        for fpr_v, tpr_v in report.roc:
            lines.append(f"roc,,{fpr_v!r},{tpr_v!r}")
        summary = {
            "scenario": report.scenario,
            "auc": report.auc,
            "mean_decision_time_alice": report.mean_decision_time["alice"],
            "mean_decision_time_eve": report.mean_decision_time["eve"],
            "decisions_within_horizon_alice": report.decisions_within_horizon["alice"],
            "decisions_within_horizon_eve": report.decisions_within_horizon["eve"],
            "decided_fraction_alice": report.decided_fraction["alice"],
            "decided_fraction_eve": report.decided_fraction["eve"],
            **{f"meta_{k}": v for k, v in sorted(report.metadata.items())},
        }
        for key, value in summary.items():
            lines.append(f"summary,{key},{value},")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif fmt == "json-lines":
        import json

        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"kind": "header", "schema_version": REPORT_SCHEMA_VERSION,
                                 "scenario": report.scenario}) + "\n")
            fh.write(json.dumps({"kind": "summary", "auc": report.auc,
                                 "mean_decision_time": report.mean_decision_time,
                                 "decisions_within_horizon": report.decisions_within_horizon,
                                 "decided_fraction": report.decided_fraction,
                                 "metadata": report.metadata}) + "\n")
            for fpr_v, tpr_v in report.roc:
                fh.write(json.dumps({"kind": "roc", "fpr": fpr_v, "tpr": tpr_v}) + "\n")
            for identity, values in report.posterior_cdf.items():
                fh.write(json.dumps({"kind": "posterior_cdf", "identity": identity,
                                     "values": values}) + "\n")
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    return path


# ---------------------------------------------------------------------------
# Dataset export
# ---------------------------------------------------------------------------

def export_csi_dataset(config: ScenarioConfig, n: int, path) -> Path:
    """Write n legitimate observations (clean LoS stream) in trace format."""
    if n < 0:
        raise ConfigError("n must be >= 0")
    params = replace(config.alice, blockage=())
    session = ChannelSession(params, "alice", [config.seed, STREAM_EXPORT])
    meta = {
        "seed": config.seed,
        "snr_noise_var": params.noise_var,
        "rho_t": params.rho_t,
        "k0": params.k0,
        "generator": "channel-simulator",
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with traceio.CsiTraceWriter(path, params.m_t, params.m_r, "alice", meta) as w:
        for _ in range(n):
            obs = session.next_observation()
            w.write(obs.t, obs.h_hat)
    return path


def export_embedding_dataset(config: ScenarioConfig, n_per_state: int, path) -> Path:
    """Labeled embedding export from the calibration streams."""
    calib = calibrate(config)
    spec = calib.encoder
    rows = []
    los = ChannelSession(replace(config.alice, blockage=()), "alice",
                         [config.seed, STREAM_CALIB_LOS])
    for t in range(n_per_state):
        rows.append((t + 1, encode(los.next_observation(), spec).z, 0))
    if config.n_states == 3:
        nlos = ChannelSession(replace(config.alice, k0=0.0, blockage=()), "alice",
                              [config.seed, STREAM_CALIB_NLOS])
        for t in range(n_per_state):
            rows.append((t + 1, encode(nlos.next_observation(), spec).z, 1))
    spoofer = _trial_spoofer(config, calib.spoofer_template, calib.trace,
                             calib.trace_offset, trial=None)
    for t in range(n_per_state):
        rows.append((t + 1, encode(spoofer.next(t=t + 1), spec).z, config.n_states - 1))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    traceio.write_embedding_dataset(path, rows, spec.d, {"scenario": config.name})
    return path
