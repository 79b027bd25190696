"""
Progress lines on stderr and JSONL run events.

Progress lines use the bracket-tag format ``[ts] [TAG] message``. Run events
are appended one JSON object per line under an exclusive portalocker lock so
concurrent writers never interleave partial lines.
"""

from __future__ import annotations

import json
import os
import sys
import time
from datetime import datetime
from typing import Any, Dict, Optional

import portalocker


def env_flag(name: str, default: str = "0") -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


def log(tag: str, message: str) -> None:
    if env_flag("SPLLG_QUIET"):
        return
    print(f"[{datetime.now().isoformat(timespec='seconds')}] [{tag}] {message}", file=sys.stderr)


def log_perf(label: str, start_time: float) -> float:
    duration = time.perf_counter() - start_time
    log("PERF", f"{label} took {duration:.2f}s")
    return duration


def _sanitize(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, BaseException):
        return f"{type(value).__name__}: {value}"
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


class EventLog:
    """Append-only JSONL event file for one run directory."""

    FILENAME = "events.jsonl"

    def __init__(self, out_dir: Optional[str]):
        self.path = os.path.join(out_dir, self.FILENAME) if out_dir else None

    def write(self, event: str, **details: Any) -> None:
        if not self.path:
            return
        record: Dict[str, Any] = {"ts": datetime.now().isoformat(), "event": event, **_sanitize(details)}
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        try:
            os.makedirs(os.path.dirname(self.path), exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                portalocker.lock(f, portalocker.LOCK_EX)
                try:
                    f.write(line + "\n")
                finally:
                    portalocker.unlock(f)
        except OSError as exc:
            print(f"[EVENTS] Could not append to {self.path}: {exc}", file=sys.stderr)
