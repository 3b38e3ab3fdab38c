"""CSI trace files, bit-compatible with the detector toolkit.

JSON-lines: a header object on the first line, then one record per line:

    header  {"version": 1, "m_t": int, "m_r": int, "label": str, ...}
    record  {"t": int, "re": [m_r*m_t floats, row-major], "im": [same]}

Floats are decimal text and round-trip 64-bit values exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

TRACE_VERSION = 1


class TraceError(Exception):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def load_matrices(path) -> tuple[dict, np.ndarray]:
    """Read a trace into (header, complex array of shape (n, m_r, m_t))."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise TraceError("empty file", 1)
        header = _parse(first, 1)
        for key in ("version", "m_t", "m_r"):
            if key not in header:
                raise TraceError(f"header missing '{key}'", 1)
        if header["version"] != TRACE_VERSION:
            raise TraceError(f"unsupported version {header['version']}", 1)
        m_r, m_t = int(header["m_r"]), int(header["m_t"])
        mats = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            rec = _parse(line, lineno)
            re, im = rec.get("re"), rec.get("im")
            if not isinstance(re, list) or not isinstance(im, list):
                raise TraceError("record needs 're' and 'im' arrays", lineno)
            if len(re) != m_r * m_t or len(im) != m_r * m_t:
                raise TraceError(
                    f"expected {m_r * m_t} entries, got re={len(re)} im={len(im)}", lineno)
            mats.append(np.asarray(re, dtype=np.float64)
                        + 1j * np.asarray(im, dtype=np.float64))
    stack = (np.stack(mats).reshape(-1, m_r, m_t) if mats
             else np.empty((0, m_r, m_t), dtype=np.complex128))
    return header, stack


def write_matrices(path, mats: np.ndarray, label: str = "eve",
                   metadata: dict | None = None) -> int:
    n, m_r, m_t = mats.shape
    header = {"version": TRACE_VERSION, "m_t": int(m_t), "m_r": int(m_r), "label": label}
    if metadata:
        header.update(metadata)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for t in range(n):
            flat = mats[t].reshape(-1)
            fh.write(json.dumps({"t": t + 1, "re": flat.real.tolist(),
                                 "im": flat.imag.tolist()},
                                separators=(",", ":")) + "\n")
    return n


def _parse(line: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceError(f"not valid JSON ({exc.msg})", lineno) from exc
    if not isinstance(obj, dict):
        raise TraceError("expected a JSON object", lineno)
    return obj
