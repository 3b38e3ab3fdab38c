"""Line-delimited file formats shared across tools.

All files are JSON-lines: the first line is a header object, every following
line one record.  Numbers are written as plain decimal text and round-trip
64-bit floats exactly.

CSI trace (``version: 1``)
    header  {"version": 1, "m_t": int, "m_r": int, "label": str, ...}
    record  {"t": int, "re": [m_r*m_t floats, row-major], "im": [same]}

Embedding dataset
    header  {"version": 1, "kind": "embeddings", "d": int, ...}
    record  {"t": int, "z": [d floats], "state_label": int}

Log-ratio trace
    header  {"version": 1, "kind": "llr-trace", ...}
    record  {"t": int, "lambda": float, "posterior": [floats], "verdict": str}

Analysis curves
    header  {"version": 1, "kind": "pfa-pd-curves", ...}
    record  {"t": int, "p_fa": float, "p_d": float, "source": "analytic"|"monte-carlo"}
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import TraceFormatError

TRACE_VERSION = 1


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def matrix_to_record(t: int, h: np.ndarray) -> dict:
    flat = np.asarray(h, dtype=np.complex128).reshape(-1)  # row-major
    return {"t": int(t), "re": flat.real.tolist(), "im": flat.imag.tolist()}


def record_to_matrix(rec: dict, m_r: int, m_t: int, line: int | None = None) -> np.ndarray:
    re, im = rec.get("re"), rec.get("im")
    if not isinstance(re, list) or not isinstance(im, list):
        raise TraceFormatError("record needs 're' and 'im' arrays", line)
    if len(re) != m_r * m_t or len(im) != m_r * m_t:
        raise TraceFormatError(
            f"expected {m_r * m_t} entries per array, got re={len(re)} im={len(im)}", line
        )
    flat = np.asarray(re, dtype=np.float64) + 1j * np.asarray(im, dtype=np.float64)
    return flat.reshape(m_r, m_t)


class CsiTraceWriter:
    """Streaming writer for the CSI trace format."""

    def __init__(self, path, m_t: int, m_r: int, label: str = "alice", metadata: dict | None = None):
        self.path = Path(path)
        header = {"version": TRACE_VERSION, "m_t": int(m_t), "m_r": int(m_r), "label": label}
        if metadata:
            header.update(metadata)
        self._fh = self.path.open("w", encoding="utf-8")
        self._fh.write(_dump(header) + "\n")
        self.m_t, self.m_r = int(m_t), int(m_r)
        self.count = 0

    def write(self, t: int, h: np.ndarray) -> None:
        if h.shape != (self.m_r, self.m_t):
            raise TraceFormatError(f"matrix shape {h.shape} does not match header")
        self._fh.write(_dump(matrix_to_record(t, h)) + "\n")
        self.count += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csi_trace(path, matrices: Iterable[tuple[int, np.ndarray]], m_t: int, m_r: int,
                    label: str = "alice", metadata: dict | None = None) -> int:
    with CsiTraceWriter(path, m_t, m_r, label, metadata) as w:
        for t, h in matrices:
            w.write(t, h)
        return w.count


def read_csi_header(path) -> dict:
    with Path(path).open("r", encoding="utf-8") as fh:
        first = fh.readline()
    if not first:
        raise TraceFormatError("empty file", 1)
    header = _parse_line(first, 1)
    for key in ("version", "m_t", "m_r"):
        if key not in header:
            raise TraceFormatError(f"header missing '{key}'", 1)
    if header["version"] != TRACE_VERSION:
        raise TraceFormatError(f"unsupported version {header['version']}", 1)
    return header


def _parse_line(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"not valid JSON ({exc.msg})", lineno) from exc
    if not isinstance(obj, dict):
        raise TraceFormatError("expected a JSON object", lineno)
    return obj


def iter_csi_trace(path) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (t, matrix) pairs, validating each record as it is read."""
    header = read_csi_header(path)
    m_r, m_t = header["m_r"], header["m_t"]
    with Path(path).open("r", encoding="utf-8") as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            rec = _parse_line(line, lineno)
            if "t" not in rec:
                raise TraceFormatError("record missing 't'", lineno)
            yield int(rec["t"]), record_to_matrix(rec, m_r, m_t, lineno)


def load_csi_trace(path) -> tuple[dict, list[tuple[int, np.ndarray]]]:
    return read_csi_header(path), list(iter_csi_trace(path))


def validate_csi_trace(path) -> tuple[dict, int]:
    """Fully parse a trace; return (header, record count) or raise."""
    header = read_csi_header(path)
    n = sum(1 for _ in iter_csi_trace(path))
    return header, n


def write_embedding_dataset(path, records: Iterable[tuple[int, np.ndarray, int]],
                            d: int, metadata: dict | None = None) -> int:
    header = {"version": TRACE_VERSION, "kind": "embeddings", "d": int(d)}
    if metadata:
        header.update(metadata)
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(_dump(header) + "\n")
        for t, z, state_label in records:
            z = np.asarray(z, dtype=np.float64)
            if z.shape != (d,):
                raise TraceFormatError(f"embedding length {z.shape} != d={d}")
            fh.write(_dump({"t": int(t), "z": z.tolist(), "state_label": int(state_label)}) + "\n")
            n += 1
    return n


def read_embedding_dataset(path) -> tuple[dict, list[tuple[int, np.ndarray, int]]]:
    with Path(path).open("r", encoding="utf-8") as fh:
        header = _parse_line(fh.readline(), 1)
        if header.get("kind") != "embeddings":
            raise TraceFormatError("not an embedding dataset", 1)
        d = int(header["d"])
        out = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            rec = _parse_line(line, lineno)
            z = np.asarray(rec.get("z", []), dtype=np.float64)
            if z.shape != (d,):
                raise TraceFormatError(f"embedding length {len(rec.get('z', []))} != d={d}", lineno)
            out.append((int(rec["t"]), z, int(rec.get("state_label", -1))))
    return header, out


def write_llr_trace(path, rows: Iterable[dict], metadata: dict | None = None) -> int:
    header = {"version": TRACE_VERSION, "kind": "llr-trace"}
    if metadata:
        header.update(metadata)
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(_dump(header) + "\n")
        for row in rows:
            fh.write(_dump({
                "t": int(row["t"]),
                "lambda": float(row["lambda"]),
                "posterior": [float(p) for p in row["posterior"]],
                "verdict": str(row["verdict"]),
            }) + "\n")
            n += 1
    return n


def write_curve_records(path, rows: Iterable[dict], metadata: dict | None = None) -> int:
    header = {"version": TRACE_VERSION, "kind": "pfa-pd-curves"}
    if metadata:
        header.update(metadata)
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(_dump(header) + "\n")
        for row in rows:
            fh.write(_dump({
                "t": int(row["t"]),
                "p_fa": float(row["p_fa"]),
                "p_d": float(row["p_d"]),
                "source": str(row["source"]),
            }) + "\n")
            n += 1
    return n


def read_jsonl(path) -> tuple[dict, list[dict]]:
    """Generic reader: header plus list of record objects."""
    with Path(path).open("r", encoding="utf-8") as fh:
        header = _parse_line(fh.readline(), 1)
        rows = [
            _parse_line(line, lineno)
            for lineno, line in enumerate(fh, start=2)
            if line.strip()
        ]
    return header, rows
