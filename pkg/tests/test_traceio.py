import json

import numpy as np
import pytest

from csiauth import traceio
from csiauth.errors import TraceFormatError


def write_valid_trace(path, n=3, m=2, rng=None):
    rng = rng or np.random.default_rng(0)
    mats = [(t + 1, (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))))
            for t in range(n)]
    traceio.write_csi_trace(path, mats, m_t=m, m_r=m, label="alice")
    return mats


class TestCsiTrace:
    def test_round_trip_bitwise(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        h = np.array([[1 / 3 + 1j * np.pi, np.e + 0.1j],
                      [-7.123456789012345e-11 + 2j, 0.0 + 0.0j]])
        traceio.write_csi_trace(path, [(1, h)], m_t=2, m_r=2)
        header, records = traceio.load_csi_trace(path)
        assert header["m_t"] == 2 and header["version"] == 1
        t, back = records[0]
        assert t == 1
        assert np.array_equal(back, h)  # decimal text preserves float64 exactly

    def test_validate_counts_records(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        write_valid_trace(path, n=5)
        header, n = traceio.validate_csi_trace(path)
        assert n == 5 and header["label"] == "alice"

    def test_wrong_array_length_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        lines = [json.dumps({"version": 1, "m_t": 2, "m_r": 2, "label": "x"}),
                 json.dumps({"t": 1, "re": [0.0] * 4, "im": [0.0] * 4}),
                 json.dumps({"t": 2, "re": [0.0] * 3, "im": [0.0] * 4})]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceFormatError, match="line 3"):
            traceio.validate_csi_trace(path)

    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"version": 1, "m_t": 1, "m_r": 1}) + "\n{oops\n")
        with pytest.raises(TraceFormatError, match="line 2"):
            traceio.validate_csi_trace(path)

    def test_missing_header_field(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"version": 1, "m_t": 1}) + "\n")
        with pytest.raises(TraceFormatError, match="m_r"):
            traceio.read_csi_header(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(TraceFormatError):
            traceio.read_csi_header(path)

    def test_header_only_is_valid(self, tmp_path):
        path = tmp_path / "empty_trace.jsonl"
        traceio.write_csi_trace(path, [], m_t=4, m_r=4)
        header, n = traceio.validate_csi_trace(path)
        assert n == 0 and header["m_t"] == 4


class TestEmbeddingDataset:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "emb.jsonl"
        rows = [(1, np.array([0.5, -0.25]), 0), (2, np.array([1e-17, 3.0]), 2)]
        traceio.write_embedding_dataset(path, rows, d=2, metadata={"scenario": "s"})
        header, back = traceio.read_embedding_dataset(path)
        assert header["d"] == 2 and header["scenario"] == "s"
        assert back[1][2] == 2
        assert np.array_equal(back[0][1], rows[0][1])
        assert np.array_equal(back[1][1], rows[1][1])

    def test_dimension_check(self, tmp_path):
        with pytest.raises(TraceFormatError):
            traceio.write_embedding_dataset(tmp_path / "x.jsonl",
                                            [(1, np.zeros(3), 0)], d=2)


class TestLlrAndCurves:
    def test_llr_trace_round_trip(self, tmp_path):
        path = tmp_path / "llr.jsonl"
        rows = [{"t": 1, "lambda": 0.5, "posterior": [0.6, 0.4], "verdict": "continue"},
                {"t": 2, "lambda": 3.2, "posterior": [0.95, 0.05], "verdict": "alice"}]
        traceio.write_llr_trace(path, rows)
        header, back = traceio.read_jsonl(path)
        assert header["kind"] == "llr-trace"
        assert back[1]["verdict"] == "alice"
        assert back[0]["lambda"] == 0.5

    def test_curve_records(self, tmp_path):
        path = tmp_path / "curves.jsonl"
        rows = [{"t": 1, "p_fa": 0.01, "p_d": 0.2, "source": "analytic"},
                {"t": 1, "p_fa": 0.012, "p_d": 0.19, "source": "monte-carlo"}]
        traceio.write_curve_records(path, rows)
        header, back = traceio.read_jsonl(path)
        assert header["kind"] == "pfa-pd-curves"
        assert {r["source"] for r in back} == {"analytic", "monte-carlo"}
