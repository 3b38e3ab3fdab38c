import json
import math

import numpy as np
import pytest
from dataclasses import replace

from csiauth import traceio
from csiauth.detector import run_session
from csiauth.errors import ConfigError
from csiauth.harness import (RunReport, ScenarioConfig, auc_pairwise, calibrate,
                             compute_roc_auc, default_scenario, emit_report,
                             export_csi_dataset, export_embedding_dataset,
                             run_scenario)
from csiauth.channel import ChannelParams
from csiauth.spoofing import SpooferKind
from scipy.special import ndtr


def tiny_scenario(name="hmm2-los", **kw):
    kw.setdefault("trials", 25)
    kw.setdefault("horizon", 20)
    kw.setdefault("calib_slots", 60)
    kw.setdefault("spoofer_warmup", 80)
    kw.setdefault("seed", 3)
    return default_scenario(name, **kw)


class TestComputeRocAuc:
    def test_perfect_separation(self):
        roc, auc = compute_roc_auc([1.0, 2.0], [-1.0, 0.0])
        assert auc == pytest.approx(1.0)
        assert roc[0] == (0.0, 0.0) and roc[-1] == (1.0, 1.0)

    def test_all_ties_is_chance(self):
        _, auc = compute_roc_auc([0.0, 0.0], [0.0, 0.0])
        assert auc == pytest.approx(0.5)

    def test_binormal_closed_form(self):
        # Closed-form binormal oracle: AUC = Phi((mu_a - mu_e)/sqrt(2)).
        rng = np.random.default_rng(21)
        a = rng.normal(1.0, 1.0, size=10_000)
        e = rng.normal(0.0, 1.0, size=10_000)
        _, auc = compute_roc_auc(a, e)
        assert auc == pytest.approx(float(ndtr(1 / math.sqrt(2))), abs=0.01)

    def test_equals_pairwise_counting(self):
        rng = np.random.default_rng(4)
        a = np.round(rng.normal(0.5, 1, size=1000), 1)  # rounding forces ties
        e = np.round(rng.normal(0.0, 1, size=1000), 1)
        _, auc = compute_roc_auc(a, e)
        assert auc == pytest.approx(auc_pairwise(a, e), abs=1e-12)

    def test_roc_monotone(self):
        rng = np.random.default_rng(5)
        roc, _ = compute_roc_auc(rng.normal(size=200), rng.normal(size=200))
        fpr = [p[0] for p in roc]
        tpr = [p[1] for p in roc]
        assert all(b >= a for a, b in zip(fpr, fpr[1:]))
        assert all(b >= a for a, b in zip(tpr, tpr[1:]))

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            compute_roc_auc([], [1.0])


class TestRunScenario:
    def test_deterministic_reports(self):
        cfg = tiny_scenario()
        r1, r2 = run_scenario(cfg), run_scenario(cfg)
        assert r1.auc == r2.auc
        assert r1.scores == r2.scores
        assert r1.roc == r2.roc

    def test_separates_identities(self):
        report = run_scenario(tiny_scenario(trials=50))
        assert report.auc > 0.8
        assert report.mean_decision_time["alice"] <= report.metadata["horizon"]

    def test_posterior_samples_in_unit_interval(self):
        report = run_scenario(tiny_scenario())
        for vals in report.posterior_cdf.values():
            arr = np.asarray(vals)
            assert np.all(arr >= 0) and np.all(arr <= 1)
            assert np.all(np.diff(arr) >= 0)  # stored sorted

    def test_report_invariants_enforced(self):
        with pytest.raises(ConfigError, match="inconsistent"):
            RunReport(scenario="x", roc=[(0.0, 0.0), (1.0, 1.0)], auc=0.9,
                      mean_decision_time={}, decisions_within_horizon={},
                      decided_fraction={}, posterior_cdf={}, scores={}, metadata={})

    def test_run_session_api(self):
        cfg = tiny_scenario()
        res = run_session(cfg, identity="alice", trial=0)
        assert len(res.trace) == cfg.horizon
        assert res.trace[-1]["t"] == cfg.horizon
        res_eve = run_session(cfg, identity="eve", trial=0)
        assert res_eve.lam_horizon < res.lam_horizon

    def test_llr_trace_export_schema(self, tmp_path):
        cfg = tiny_scenario()
        res = run_session(cfg, identity="alice", trial=1)
        path = tmp_path / "llr.jsonl"
        traceio.write_llr_trace(path, res.trace)
        header, rows = traceio.read_jsonl(path)
        assert header["kind"] == "llr-trace"
        assert {"t", "lambda", "posterior", "verdict"} <= set(rows[0])

    def test_roc_from_exported_llr_traces(self, tmp_path):
        # Offline ROC computation from per-session trace files.
        from csiauth.harness import scores_from_llr_traces

        cfg = tiny_scenario(trials=4)
        paths = {"alice": [], "eve": []}
        for identity in paths:
            for trial in range(4):
                res = run_session(cfg, identity=identity, trial=trial)
                p = tmp_path / f"{identity}{trial}.jsonl"
                traceio.write_llr_trace(p, res.trace)
                paths[identity].append(p)
        sa = scores_from_llr_traces(paths["alice"])
        se = scores_from_llr_traces(paths["eve"])
        _, auc = compute_roc_auc(sa, se)
        assert 0.0 <= auc <= 1.0
        direct = run_session(cfg, identity="alice", trial=0).lam_horizon
        assert sa[0] == pytest.approx(direct, abs=1e-12)

    def test_reset_mode_counts_decisions(self):
        cfg = tiny_scenario(decision_mode="reset", trials=10)
        report = run_scenario(cfg)
        # Reset mode keeps deciding, so counts exceed one per session.
        assert report.decisions_within_horizon["alice"] >= 1.0
        assert report.decisions_within_horizon["eve"] >= 1.0


class TestCalibration:
    def test_model_shapes_per_variant(self):
        assert calibrate(tiny_scenario("hmm2-los")).model.n_states == 2
        assert calibrate(tiny_scenario("hmm3-blockage")).model.n_states == 3

    def test_state_labels(self):
        model = calibrate(tiny_scenario("hmm3-blockage")).model
        assert [e.state_label for e in model.emissions] == [0, 1, 2]

    def test_nlos_state_has_smaller_mean(self):
        # The blocked state loses the deterministic component.
        model = calibrate(tiny_scenario("hmm3-blockage", calib_slots=150)).model
        assert np.linalg.norm(model.emissions[1].mu) < np.linalg.norm(model.emissions[0].mu)


class TestExports:
    def test_empty_export_loadable(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        export_csi_dataset(tiny_scenario(), 0, path)
        header, n = traceio.validate_csi_trace(path)
        assert n == 0 and header["label"] == "alice"

    def test_round_trip_count_and_dims(self, tmp_path):
        path = tmp_path / "ds.jsonl"
        export_csi_dataset(tiny_scenario(), 17, path)
        header, records = traceio.load_csi_trace(path)
        assert len(records) == 17
        assert records[0][1].shape == (4, 4)

    def test_exported_variance(self, tmp_path):
        # NLoS-only export: per-entry variance = 1 + noise_var.
        path = tmp_path / "var.jsonl"
        cfg = tiny_scenario()
        cfg = replace(cfg, alice=replace(cfg.alice, k0=0.0))
        export_csi_dataset(cfg, 3000, path)
        _, records = traceio.load_csi_trace(path)
        samples = np.stack([h for _, h in records])
        var = np.mean(np.abs(samples) ** 2) - np.abs(np.mean(samples)) ** 2
        assert var == pytest.approx(1.0 + cfg.alice.noise_var, rel=0.05)

    def test_embedding_export(self, tmp_path):
        path = tmp_path / "emb.jsonl"
        export_embedding_dataset(tiny_scenario("hmm3-blockage"), 30, path)
        header, rows = traceio.read_embedding_dataset(path)
        assert header["d"] == 16
        assert sorted({r[2] for r in rows}) == [0, 1, 2]
        assert len(rows) == 90


class TestEmitReport:
    def test_empty_roc_rejected(self, tmp_path):
        report = run_scenario(tiny_scenario())
        report.roc = []
        with pytest.raises(ConfigError):
            emit_report(report, "csv", tmp_path / "r.csv")

    def test_csv_row_count(self, tmp_path):
        report = run_scenario(tiny_scenario())
        path = emit_report(report, "csv", tmp_path / "r.csv")
        lines = path.read_text().strip().splitlines()
        n_roc = sum(1 for l in lines if l.startswith("roc,"))
        n_summary = sum(1 for l in lines if l.startswith("summary,"))
        assert n_roc == len(report.roc)
        assert len(lines) == 1 + n_roc + n_summary  # header + points + summary

    def test_jsonl_round_trip_preserves_auc(self, tmp_path):
        report = run_scenario(tiny_scenario())
        path = emit_report(report, "json-lines", tmp_path / "r.jsonl")
        rows = [json.loads(l) for l in path.read_text().splitlines()]
        summary = next(r for r in rows if r["kind"] == "summary")
        assert summary["auc"] == report.auc  # exact float round trip

    def test_unknown_format(self, tmp_path):
        report = run_scenario(tiny_scenario())
        with pytest.raises(ConfigError):
            emit_report(report, "parquet", tmp_path / "r.x")


class TestSessionOutcomes:
    """Monte Carlo verdict statistics of the full per-slot loop."""

    def _verdict_fraction(self, name, identity, verdict, trials=500, **kw):
        from csiauth.harness import calibrate, _run_one

        cfg = default_scenario(name, trials=trials, seed=5, **kw)
        calib = calibrate(cfg)
        hits = 0
        for trial in range(trials):
            res = _run_one(cfg, calib, identity, trial)
            if res.first_decision is not None and res.first_decision.verdict == verdict:
                hits += 1
        return hits / trials

    def test_alice_sessions_authenticate(self):
        frac = self._verdict_fraction("hmm2-los", "alice", "alice")
        assert frac >= 0.95

    def test_naive_spoofer_sessions_flagged(self):
        frac = self._verdict_fraction("hmm2-los", "eve", "eve",
                                      spoofer=SpooferKind("naive"))
        assert frac >= 0.9

    def test_ema_beats_static_under_mimicry(self):
        base = run_scenario(default_scenario("hmm2-los", trials=300, seed=5))
        adaptive = run_scenario(default_scenario("hmm2-los-ema", trials=300, seed=5))
        assert adaptive.auc > base.auc

    def test_variant_paths_produce_sane_reports(self):
        from csiauth.detector import EmaPolicy

        variants = [
            default_scenario("hmm3-blockage-ema", trials=20, seed=3,
                             ema=EmaPolicy(trigger="posterior")),
            default_scenario("hmm2-los", trials=20, seed=3,
                             encoder_mode="mag-phase"),
            default_scenario("sprt-los", trials=20, seed=3),
        ]
        for cfg in variants:
            report = run_scenario(cfg)
            assert 0.5 <= report.auc <= 1.0

    def test_oracle_labeled_adaptation_is_upper_bound(self):
        from csiauth.detector import EmaPolicy

        cfg = default_scenario("hmm3-blockage-ema", trials=60, seed=3,
                               ema=EmaPolicy(oracle_labels=True))
        oracle = run_scenario(cfg)
        posterior = run_scenario(default_scenario("hmm3-blockage-ema",
                                                  trials=60, seed=3))
        assert oracle.auc >= posterior.auc - 0.02


class TestScenarioConfig:
    def test_eve_defaults_to_offset_angles(self):
        cfg = ScenarioConfig(alice=ChannelParams(los_angles=(0.2, -0.1)))
        assert cfg.eve.los_angles[0] == pytest.approx(0.2 + math.radians(30))
        assert cfg.eve.blockage == ()

    def test_wald_targets_resolve(self):
        cfg = ScenarioConfig(wald_targets=(0.05, 0.05))
        assert cfg.thresholds.gamma1 == pytest.approx(math.log(19))

    def test_validation(self):
        with pytest.raises(ConfigError):
            ScenarioConfig(trials=0)
        with pytest.raises(ConfigError):
            ScenarioConfig(variant="hmm9")
        with pytest.raises(ConfigError):
            default_scenario("nope")

    def test_trace_spoofer_trials_consume_disjoint_segments(self, tmp_path):
        path = tmp_path / "alice.jsonl"
        cfg = tiny_scenario(trials=4)
        export_csi_dataset(cfg, cfg.calib_slots + cfg.trials * cfg.horizon, path)
        cfg = replace(cfg, spoofer=SpooferKind("trace", trace_path=str(path),
                                               replay="sequential"))
        report = run_scenario(cfg)  # must not exhaust
        assert 0.0 <= report.auc <= 1.0
