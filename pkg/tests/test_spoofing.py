import numpy as np
import pytest
from dataclasses import replace

from csiauth.channel import ChannelParams, ChannelSession, CsiObservation, complex_gaussian
from csiauth.errors import ConfigError, TraceExhaustedError, TraceFormatError
from csiauth.harness import default_scenario, export_csi_dataset, run_scenario
from csiauth.spoofing import (MomentMatchingSpoofer, NaiveSpoofer, SpooferKind,
                              TraceSpoofer, load_trace, make_spoofer, next_spoofed_csi)
from csiauth import traceio


def write_trace(path, n, m=2, seed=0):
    rng = np.random.default_rng(seed)
    mats = [(t + 1, complex_gaussian(rng, (m, m))) for t in range(n)]
    traceio.write_csi_trace(path, mats, m_t=m, m_r=m, label="spoof")
    return mats


class TestTraceSpoofer:
    def test_sequential_exhaustion(self, tmp_path):
        path = tmp_path / "one.jsonl"
        write_trace(path, 1)
        spoofer = TraceSpoofer(load_trace(path), replay="sequential")
        next_spoofed_csi(spoofer)
        with pytest.raises(TraceExhaustedError, match="exhausted"):
            next_spoofed_csi(spoofer)

    def test_loop_never_errors(self, tmp_path):
        path = tmp_path / "three.jsonl"
        mats = write_trace(path, 3)
        spoofer = TraceSpoofer(load_trace(path), replay="loop")
        out = [spoofer.next(t=t) for t in range(10)]
        assert np.array_equal(out[3].h_hat, mats[0][1])
        assert np.array_equal(out[9].h_hat, mats[0][1])

    def test_replay_order(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        mats = write_trace(path, 4)
        spoofer = TraceSpoofer(load_trace(path), replay="sequential", start=1)
        assert np.array_equal(spoofer.next().h_hat, mats[1][1])


class TestLoadTrace:
    def test_well_formed(self, tmp_path):
        path = tmp_path / "t.jsonl"
        write_trace(path, 3)
        trace = load_trace(path)
        assert len(trace.records) == 3 and trace.m_t == 2

    def test_wrong_length_names_line(self, tmp_path):
        import json
        path = tmp_path / "bad.jsonl"
        path.write_text("\n".join([
            json.dumps({"version": 1, "m_t": 2, "m_r": 2, "label": "x"}),
            json.dumps({"t": 1, "re": [0.0] * 4, "im": [0.0] * 4}),
            json.dumps({"t": 2, "re": [0.0] * 2, "im": [0.0] * 4}),
        ]) + "\n")
        with pytest.raises(TraceFormatError, match="line 3"):
            load_trace(path)

    def test_empty_trace_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        traceio.write_csi_trace(path, [], m_t=2, m_r=2)
        with pytest.raises(TraceFormatError, match="no records"):
            load_trace(path)

    def test_round_trip_exact(self, tmp_path):
        path = tmp_path / "rt.jsonl"
        mats = write_trace(path, 5, seed=9)
        trace = load_trace(path)
        for (_, want), got in zip(mats, trace.records):
            assert np.array_equal(want, got)


class TestMomentMatching:
    def test_mean_convergence(self):
        # Sampling oracle: fitted mean within 3 standard errors entrywise.
        kind = SpooferKind("moment-matching", beta_e=0.99)
        params = ChannelParams(m_t=2, m_r=2)
        spoofer = MomentMatchingSpoofer(kind, params, seed=1)
        rng = np.random.default_rng(2)
        mean = np.array([[1.0 + 0.5j, -0.2j], [0.3, 1.0 - 1.0j]])
        var = 0.5
        for t in range(10_000):
            obs = CsiObservation(t=t, h_hat=mean + complex_gaussian(rng, (2, 2), var))
            spoofer.feed(obs)
        se = np.sqrt((1 - 0.99) / (1 + 0.99) * var / 2)
        assert np.max(np.abs(spoofer.mean.real - mean.real)) < 3 * se
        assert np.max(np.abs(spoofer.mean.imag - mean.imag)) < 3 * se

    def test_falls_back_to_naive_before_warm(self):
        kind = SpooferKind("moment-matching")
        params = ChannelParams(m_t=2, m_r=2)
        spoofer = MomentMatchingSpoofer(kind, params, seed=5)
        naive = NaiveSpoofer(params, seed=5)
        assert np.array_equal(spoofer.next().h_hat, naive.next().h_hat)

    def test_longer_window_tracks_sample_mean_better(self):
        # Fitted mean approaches the eavesdropped sample mean as the
        # effective window grows.
        params = ChannelParams(m_t=2, m_r=2)
        rng = np.random.default_rng(6)
        mean = np.array([[0.5 + 1j, -1.0], [0.25j, 1.5 - 0.5j]])
        samples = [mean + complex_gaussian(rng, (2, 2), 0.8) for _ in range(4000)]
        sample_mean = np.mean(samples, axis=0)
        errs = []
        for beta_e in (0.9, 0.99, 0.999):
            sp = MomentMatchingSpoofer(SpooferKind("moment-matching", beta_e=beta_e),
                                       params, seed=1)
            for t, s in enumerate(samples):
                sp.feed(CsiObservation(t=t, h_hat=s))
            errs.append(np.linalg.norm(sp.mean - sample_mean))
        assert errs[0] > errs[1] > errs[2]

    def test_spawn_shares_fit_not_stream(self):
        kind = SpooferKind("moment-matching", beta_e=0.9)
        params = ChannelParams(m_t=2, m_r=2)
        base = MomentMatchingSpoofer(kind, params, seed=1)
        rng = np.random.default_rng(3)
        for t in range(10):
            base.feed(CsiObservation(t=t, h_hat=complex_gaussian(rng, (2, 2))))
        a, b = base.spawn([7]), base.spawn([8])
        assert np.array_equal(a.mean, b.mean)
        assert not np.array_equal(a.next().h_hat, b.next().h_hat)


class TestSpooferKind:
    def test_variant_validation(self):
        with pytest.raises(ConfigError):
            SpooferKind("ganorama")
        with pytest.raises(ConfigError):
            SpooferKind("trace")  # needs a path

    def test_make_spoofer_dispatch(self, tmp_path):
        params = ChannelParams(m_t=2, m_r=2)
        path = tmp_path / "t.jsonl"
        write_trace(path, 2)
        assert isinstance(make_spoofer(SpooferKind("naive"), params), NaiveSpoofer)
        assert isinstance(make_spoofer(SpooferKind("moment-matching"), params),
                          MomentMatchingSpoofer)
        assert isinstance(make_spoofer(SpooferKind("trace", trace_path=str(path)), params),
                          TraceSpoofer)


class TestDetectionBaselines:
    def test_naive_spoofer_auc_above_090(self):
        # Spatially distinct transmitter at the nominal SNR is detectable.
        cfg = default_scenario("hmm2-los", trials=100, seed=7,
                               spoofer=SpooferKind("naive"))
        report = run_scenario(cfg)
        assert report.auc > 0.9

    def test_perfect_spoof_drives_auc_to_chance(self, tmp_path):
        # Replaying the victim's own exported CSI bounds spoofer strength.
        path = tmp_path / "alice.jsonl"
        cfg = default_scenario("sprt-los", trials=100, seed=11, horizon=30,
                               calib_slots=100)
        export_csi_dataset(cfg, 100 + 100 * 30 + 10, path)
        cfg = replace(cfg, spoofer=SpooferKind("trace", trace_path=str(path),
                                               replay="sequential"))
        report = run_scenario(cfg)
        assert report.auc < 0.65
