import json
import os
import sqlite3
from datetime import datetime, timezone

RUNS = "runs"


def _get_conn(db_path: str) -> sqlite3.Connection:
    if not db_path:
        raise ValueError("db_path is required")
    os.makedirs(os.path.dirname(os.path.abspath(db_path)), exist_ok=True)
    conn = sqlite3.connect(db_path)
    conn.execute(
        "CREATE TABLE IF NOT EXISTS json_store ("
        "name TEXT PRIMARY KEY,"
        "json TEXT NOT NULL,"
        "updated_at TEXT NOT NULL)"
    )
    return conn


def read_json_store(db_path: str, name: str, default=None):
    try:
        conn = _get_conn(db_path)
    except Exception:
        return default
    try:
        row = conn.execute("SELECT json FROM json_store WHERE name = ?", (name,)).fetchone()
        if not row:
            return default
        return json.loads(row[0])
    except Exception:
        return default
    finally:
        conn.close()


def _parse_ts(value):
    """Naive UTC datetime, so stamps with and without an offset compare."""
    if not value:
        return None
    try:
        text = str(value).strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        parsed = datetime.fromisoformat(text)
    except Exception:
        return None
    if parsed.tzinfo is not None:
        parsed = parsed.astimezone(timezone.utc).replace(tzinfo=None)
    return parsed


def _merge_runs(current, incoming):
    """Union of run records keyed by run_id; the later finished_at wins."""
    by_id = {}
    order = []
    for record in list(current or []) + list(incoming or []):
        if not isinstance(record, dict) or not record.get("run_id"):
            continue
        run_id = record["run_id"]
        existing = by_id.get(run_id)
        if existing is None:
            order.append(run_id)
            by_id[run_id] = dict(record)
            continue
        existing_ts = _parse_ts(existing.get("finished_at")) or datetime.min
        incoming_ts = _parse_ts(record.get("finished_at")) or datetime.min
        if incoming_ts >= existing_ts:
            by_id[run_id] = dict(record)
    return [by_id[run_id] for run_id in order]


def write_json_store(db_path: str, name: str, data, merge: bool = True) -> None:
    now = datetime.now().isoformat()
    conn = _get_conn(db_path)
    try:
        if merge and name == RUNS:
            conn.execute("BEGIN IMMEDIATE")
            row = conn.execute("SELECT json FROM json_store WHERE name = ?", (name,)).fetchone()
            if row:
                try:
                    data = _merge_runs(json.loads(row[0]), data)
                except Exception:
                    pass
        payload = json.dumps(data)
        conn.execute(
            "INSERT INTO json_store (name, json, updated_at) VALUES (?, ?, ?) "
            "ON CONFLICT(name) DO UPDATE SET json=excluded.json, updated_at=excluded.updated_at",
            (name, payload, now)
        )
        conn.commit()
    except Exception:
        conn.rollback()
        raise
    finally:
        conn.close()


def record_run(db_path: str, record: dict) -> None:
    write_json_store(db_path, RUNS, [record])


def list_runs(db_path: str):
    return read_json_store(db_path, RUNS, default=[]) or []


def find_run(db_path: str, run_id: str):
    return next((r for r in list_runs(db_path) if r.get("run_id") == run_id), None)
