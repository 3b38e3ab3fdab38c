"""Scenario configuration files.

A config file is a YAML stream with one document per scenario.  Every key is
optional except ``name`` when more than one document is present; a document
may start from a named preset and override fields.  Schema (defaults in
parentheses):

    name: my-scenario
    preset: hmm2-los            # start from a built-in scenario
    variant: hmm2               # sprt | hmm2 | hmm3
    horizon: 50
    trials: 500
    seed: 1
    calib_slots: 200
    spoofer_warmup: 500
    encoder: {d: 16, mode: real-imag, seed: 0}
    channel:                    # legitimate link
      m_t: 4
      m_r: 4
      rho_t: 0.7
      r_tx: 0.5
      r_rx: 0.5
      snr_db: 5.0               # or noise_var directly
      k0: 10.0
      sigma_phi: 0.0075
      los_angles: [0.35, -0.2]  # radians (departure, arrival)
      blockage: [[33, 15]]      # [start, duration] pairs
    eve_channel:                # spoofer link; default = legitimate link
      los_angle_offset_deg: 30  # with offset angles and no blockage
    ema:
      enabled: false
      beta_normal: 0.995
      beta_blockage: 0.9
      trigger: oracle           # oracle | posterior | none
      recovery_slots: 15
      adapt_eve: true
      adapt_confidence: 0.7
      oracle_labels: false
    spoofer:
      variant: moment-matching  # naive | moment-matching | trace
      beta_e: 0.98
      observation_noise: null   # null = same as the victim's
      trace_path: null
      replay: sequential        # or loop
    thresholds: {alpha_fa: 0.05, beta_md: 0.05}   # or {gamma0: .., gamma1: ..}
    hmm: {pi: [...], transition: [[...], ...]}
"""

from __future__ import annotations

import math
from dataclasses import fields, replace
from pathlib import Path

import numpy as np
import yaml

from .channel import ChannelParams
from .detector import DecisionThresholds, EmaPolicy
from .errors import ConfigError
from .harness import ScenarioConfig, default_eve_params, default_scenario
from .spoofing import SpooferKind

_CHANNEL_KEYS = {f.name for f in fields(ChannelParams)} | {"snr_db"}
_TOP_KEYS = {"name", "preset", "variant", "horizon", "trials", "seed", "calib_slots",
             "spoofer_warmup", "encoder", "channel", "eve_channel", "ema", "spoofer",
             "thresholds", "hmm", "out_dir", "reg_eps", "decision_mode"}


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _channel_params(doc: dict, base: ChannelParams, where: str) -> ChannelParams:
    _check_keys(doc, _CHANNEL_KEYS, where)
    doc = dict(doc)
    if "snr_db" in doc:
        if "noise_var" in doc:
            raise ConfigError(f"{where}: give snr_db or noise_var, not both")
        doc["noise_var"] = 10.0 ** (-float(doc.pop("snr_db")) / 10.0)
    if "los_angles" in doc:
        doc["los_angles"] = tuple(float(a) for a in doc["los_angles"])
    if "blockage" in doc:
        doc["blockage"] = tuple((int(b[0]), int(b[1])) for b in doc["blockage"])
    return replace(base, **doc)


def parse_scenario(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("each scenario document must be a mapping")
    _check_keys(doc, _TOP_KEYS, "scenario")
    if "preset" in doc:
        cfg = default_scenario(str(doc["preset"]))
    else:
        cfg = ScenarioConfig()
    kwargs: dict = {}
    if "name" in doc:
        kwargs["name"] = str(doc["name"])
    for key in ("variant", "horizon", "trials", "seed", "calib_slots",
                "spoofer_warmup", "out_dir", "reg_eps", "decision_mode"):
        if key in doc:
            kwargs[key] = doc[key]

    if "channel" in doc:
        kwargs["alice"] = _channel_params(doc["channel"], cfg.alice, "channel")
    alice = kwargs.get("alice", cfg.alice)

    if "eve_channel" in doc:
        edoc = dict(doc["eve_channel"])
        offset = edoc.pop("los_angle_offset_deg", None)
        base = default_eve_params(alice)
        if offset is not None:
            dep, arr = alice.los_angles
            off = math.radians(float(offset))
            base = replace(base, los_angles=(dep + off, arr + off))
        kwargs["eve"] = _channel_params(edoc, base, "eve_channel")
    elif "channel" in doc:
        kwargs["eve"] = default_eve_params(alice)

    if "encoder" in doc:
        enc = dict(doc["encoder"])
        _check_keys(enc, {"d", "mode", "seed"}, "encoder")
        kwargs["encoder_d"] = int(enc.get("d", cfg.encoder_d))
        kwargs["encoder_mode"] = str(enc.get("mode", cfg.encoder_mode))
        kwargs["encoder_seed"] = int(enc.get("seed", cfg.encoder_seed))

    if "ema" in doc:
        edoc = dict(doc["ema"])
        enabled = bool(edoc.pop("enabled", True))
        allowed = {f.name for f in fields(EmaPolicy)}
        _check_keys(edoc, allowed, "ema")
        kwargs["ema"] = EmaPolicy(**edoc) if enabled else None

    if "spoofer" in doc:
        sdoc = dict(doc["spoofer"])
        _check_keys(sdoc, {f.name for f in fields(SpooferKind)}, "spoofer")
        kwargs["spoofer"] = SpooferKind(**sdoc)

    if "thresholds" in doc:
        tdoc = dict(doc["thresholds"])
        if {"gamma0", "gamma1"} <= set(tdoc):
            kwargs["thresholds"] = DecisionThresholds(float(tdoc["gamma0"]),
                                                      float(tdoc["gamma1"]))
            kwargs["wald_targets"] = None
        elif {"alpha_fa", "beta_md"} <= set(tdoc):
            kwargs["wald_targets"] = (float(tdoc["alpha_fa"]), float(tdoc["beta_md"]))
            kwargs["thresholds"] = None
        else:
            raise ConfigError("thresholds need gamma0/gamma1 or alpha_fa/beta_md")

    if "hmm" in doc:
        hdoc = dict(doc["hmm"])
        _check_keys(hdoc, {"pi", "transition"}, "hmm")
        if "pi" in hdoc:
            kwargs["pi"] = np.asarray(hdoc["pi"], dtype=np.float64)
        if "transition" in hdoc:
            kwargs["transition"] = np.asarray(hdoc["transition"], dtype=np.float64)

    try:
        return replace(cfg, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenarios(path) -> dict[str, ScenarioConfig]:
    """Parse every document in a YAML config file, keyed by scenario name."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        docs = [d for d in yaml.safe_load_all(text) if d is not None]
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not docs:
        raise ConfigError(f"no scenario documents in {path}")
    out: dict[str, ScenarioConfig] = {}
    for i, doc in enumerate(docs):
        if len(docs) > 1 and "name" not in doc:
            raise ConfigError(f"document {i + 1} needs a 'name'")
        cfg = parse_scenario(doc)
        if cfg.name in out:
            raise ConfigError(f"duplicate scenario name {cfg.name!r}")
        out[cfg.name] = cfg
    return out
