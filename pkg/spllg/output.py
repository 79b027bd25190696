"""
Result files: trace.csv, summary.json and manifest.json.

The trace column order is fixed per SCHEMA_VERSION; ``mass[*]`` expands to
``mass_1 .. mass_J``. Changing the template without bumping the version makes
the schema fingerprint check fail.

Files are written through a RunWriter, which holds an exclusive portalocker
lock on ``<out>/.lock`` and replaces each file atomically.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from typing import Any, Dict, List, Sequence

import numpy as np
import portalocker

from .diagnostics import TRACE_FIELDS, DiagnosticsTrace

SCHEMA_VERSION = 1
TRACE_TEMPLATE = ("time", "path", "mass[*]") + TRACE_FIELDS
SCHEMA_FINGERPRINTS = {
    1: "94beb8e98876c5058e85385d579874d120484423ad55bc8f3a19abf793688feb",
}

TRACE_FILE = "trace.csv"
SUMMARY_FILE = "summary.json"
MANIFEST_FILE = "manifest.json"
LOCK_FILE = ".lock"


def schema_fingerprint(template: Sequence[str] = TRACE_TEMPLATE, version: int = SCHEMA_VERSION) -> str:
    text = f"v{version}:" + ",".join(template)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def trace_columns(wavefunctions: int) -> List[str]:
    columns: List[str] = []
    for name in TRACE_TEMPLATE:
        if name == "mass[*]":
            columns.extend(f"mass_{j + 1}" for j in range(wavefunctions))
        else:
            columns.append(name)
    return columns


def _fmt(value: float) -> str:
    return repr(float(value))


def render_trace_csv(traces: Sequence[DiagnosticsTrace]) -> str:
    """One row per (path, save point), paths in index order."""
    if not traces:
        raise ValueError("no traces to render")
    wavefunctions = traces[0].masses.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace_columns(wavefunctions))
    for trace in sorted(traces, key=lambda t: t.path_index):
        for i in range(trace.size):
            row = [_fmt(trace.times[i]), str(trace.path_index)]
            row.extend(_fmt(v) for v in trace.masses[i])
            row.extend(_fmt(trace.columns[name][i]) for name in TRACE_FIELDS)
            writer.writerow(row)
    return buf.getvalue()


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings "inf", "-inf" and "nan"."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def dump_json(data: Any) -> str:
    return json.dumps(jsonable(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


class RunWriter:
    """Single writer for one output directory."""

    def __init__(self, out_dir: str, timeout: float = 30.0):
        self.out_dir = out_dir
        self.timeout = timeout
        self._lock = None
        self.written: Dict[str, str] = {}

    def __enter__(self) -> "RunWriter":
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.out_dir}: {exc}") from exc
        self._lock = portalocker.Lock(os.path.join(self.out_dir, LOCK_FILE), mode="a", timeout=self.timeout)
        self._lock.acquire()
        return self

    def __exit__(self, *exc_info) -> None:
        if self._lock is not None:
            self._lock.release()
            self._lock = None

    def write_text(self, name: str, text: str) -> str:
        path = os.path.join(self.out_dir, name)
        tmp = f"{path}.tmp"
        try:
            with open(tmp, "w", encoding="utf-8", newline="") as f:
                f.write(text)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        self.written[name] = path
        return path

    def write_json(self, name: str, data: Any) -> str:
        return self.write_text(name, dump_json(data))

    def write_trace(self, traces: Sequence[DiagnosticsTrace]) -> str:
        return self.write_text(TRACE_FILE, render_trace_csv(traces))
