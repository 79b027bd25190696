#!/usr/bin/env python3
"""
SPLLG experiment server: launches experiment modules and serves the run registry.
"""

from flask import Flask, g, jsonify, request, send_file
import json
import os
import threading
import time
import subprocess
import sys
import uuid
import copy
from datetime import datetime

from spllg import SOFTWARE
from spllg.config import load_schema
from spllg.events import env_flag, log, log_perf
from spllg.output import MANIFEST_FILE, SUMMARY_FILE, TRACE_FILE
from spllg.store import find_run, list_runs


# ==================== PATHS ====================
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
MODULES_DIR = os.path.join(BASE_DIR, "Modules")
SQLITE_DB_FILE = os.getenv("SPLLG_REGISTRY") or os.path.join(BASE_DIR, "runs.sqlite3")
MODULE_CONFIG_DIR = os.path.join(BASE_DIR, "runs", "module_configs")

app = Flask(__name__)


@app.before_request
def start_timer():
    g._req_start = time.perf_counter()


@app.after_request
def log_request(response):
    start = getattr(g, "_req_start", None)
    if start is not None and (request.path or "").startswith("/api/"):
        log_perf(request.path, start)
    return response


# ==================== MODULE SYSTEM ====================

def discover_modules():
    """Find all experiment modules under Modules/"""
    modules = []
    if not os.path.isdir(MODULES_DIR):
        return modules
    for module_name in sorted(os.listdir(MODULES_DIR)):
        module_json = os.path.join(MODULES_DIR, module_name, "module.json")
        if not os.path.exists(module_json):
            continue
        try:
            with open(module_json, "r", encoding="utf-8") as f:
                module_info = json.load(f)
                module_info["id"] = module_name
                modules.append(module_info)
        except (json.JSONDecodeError, OSError):
            continue
    return modules


class ModuleRunner:
    """Run modules asynchronously with status tracking"""

    def __init__(self, db_path=SQLITE_DB_FILE):
        self.db_path = db_path
        self.running_modules = {}
        self.lock = threading.Lock()
        self.max_concurrent = int(os.environ.get("SPLLG_MAX_MODULES", "2") or 2)
        self.semaphore = threading.Semaphore(self.max_concurrent)
        self.timeout = int(os.environ.get("SPLLG_MODULE_TIMEOUT", "3600") or 3600)

    def _update(self, thread_id, **fields):
        with self.lock:
            if thread_id in self.running_modules:
                self.running_modules[thread_id].update(fields)

    def _execute(self, thread_id, module_id, config):
        config_file = None
        acquired = False
        try:
            self.semaphore.acquire()
            acquired = True
            self._update(thread_id, status="running", start_time=datetime.now().isoformat())
            module_script = os.path.join(MODULES_DIR, module_id, f"{module_id}.py")
            if not os.path.exists(module_script):
                raise FileNotFoundError(f"No Python script found for module {module_id}")

            os.makedirs(MODULE_CONFIG_DIR, exist_ok=True)
            config_file = os.path.join(MODULE_CONFIG_DIR, f"module_config_{thread_id}.json")
            with open(config_file, "w", encoding="utf-8") as f:
                json.dump({**config, "database_path": os.path.abspath(self.db_path),
                           "module_id": module_id, "thread_id": thread_id}, f, indent=2)

            log("MODULE", f"{module_id} ({thread_id}) starting")
            result = subprocess.run(
                [sys.executable, module_script, config_file],
                capture_output=True,
                text=True,
                timeout=self.timeout,
                cwd=BASE_DIR,
            )
            final_status = "completed"
            try:
                output = json.loads(result.stdout.strip())
            except json.JSONDecodeError:
                output = {"message": result.stdout.strip()}
            if result.returncode != 0 or str(output.get("status", "")).lower() == "error":
                final_status = "failed"
            self._update(
                thread_id,
                status=final_status,
                output=output,
                returncode=result.returncode,
                stderr=result.stderr[-4000:],
                completed_at=datetime.now().isoformat(),
            )
        except subprocess.TimeoutExpired:
            self._update(thread_id, status="timeout", completed_at=datetime.now().isoformat())
        except Exception as e:
            self._update(thread_id, status="error", error=str(e), completed_at=datetime.now().isoformat())
        finally:
            if config_file and os.path.exists(config_file):
                try:
                    os.remove(config_file)
                except OSError:
                    pass
            if acquired:
                self.semaphore.release()

    def run_module(self, module_id, config):
        """Run a module in a background thread and return its thread id"""
        thread_id = str(uuid.uuid4())[:8]
        with self.lock:
            self.running_modules[thread_id] = {
                "module_id": module_id,
                "status": "queued",
                "queued_at": datetime.now().isoformat(),
            }
        thread = threading.Thread(target=self._execute, args=(thread_id, module_id, config))
        thread.daemon = True
        thread.start()
        return thread_id

    def get_module_status(self, thread_id):
        with self.lock:
            status = self.running_modules.get(thread_id)
            return copy.deepcopy(status) if status else None

    def get_all_status(self):
        with self.lock:
            jobs = []
            for thread_id, info in self.running_modules.items():
                entry = copy.deepcopy(info)
                entry["thread_id"] = thread_id
                jobs.append(entry)
            return jobs


module_runner = ModuleRunner()


# ==================== API ====================

@app.route("/api/health")
def health():
    return jsonify({"status": "ok", "software": SOFTWARE})


@app.route("/api/config/schema")
def config_schema():
    return jsonify(load_schema())


@app.route("/api/modules")
def get_modules():
    return jsonify(discover_modules())


@app.route("/api/modules/<module_id>/run", methods=["POST"])
def run_module(module_id):
    if module_id not in {m["id"] for m in discover_modules()}:
        return jsonify({"error": f"Unknown module {module_id}"}), 404
    config = request.get_json(silent=True)
    if not isinstance(config, dict):
        config = {}
    thread_id = module_runner.run_module(module_id, config)
    return jsonify({"thread_id": thread_id, "status": "queued"}), 202


@app.route("/api/modules/status/<thread_id>")
def get_module_status(thread_id):
    status = module_runner.get_module_status(thread_id)
    if status:
        return jsonify(status)
    return jsonify({"error": "Thread not found"}), 404


@app.route("/api/modules/status")
def get_all_module_status():
    return jsonify(module_runner.get_all_status())


@app.route("/api/runs")
def get_runs():
    return jsonify(list_runs(module_runner.db_path))


def _read_json_file(path, default=None):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError):
        return default


@app.route("/api/runs/<run_id>")
def get_run(run_id):
    record = find_run(module_runner.db_path, run_id)
    if not record:
        return jsonify({"error": "Run not found"}), 404
    out_dir = record.get("out_dir") or ""
    return jsonify({
        **record,
        "manifest": _read_json_file(os.path.join(out_dir, MANIFEST_FILE)),
        "summary": _read_json_file(os.path.join(out_dir, SUMMARY_FILE)),
    })


@app.route("/api/runs/<run_id>/trace")
def get_run_trace(run_id):
    record = find_run(module_runner.db_path, run_id)
    if not record:
        return jsonify({"error": "Run not found"}), 404
    path = os.path.join(record.get("out_dir") or "", TRACE_FILE)
    if not os.path.exists(path):
        return jsonify({"error": "Trace not available"}), 404
    return send_file(path, mimetype="text/csv", as_attachment=True, download_name=f"{run_id}_{TRACE_FILE}")


if __name__ == "__main__":
    host = os.getenv("HOST", "127.0.0.1")
    port = int(os.getenv("PORT", "5000"))
    print("=" * 60)
    print(f"SPLLG EXPERIMENT SERVER ({SOFTWARE})")
    print("=" * 60)
    print(f"API Base URL: http://{host}:{port}/api/")
    print("  GET  /api/modules               - List experiment modules")
    print("  POST /api/modules/{id}/run      - Run module")
    print("  GET  /api/modules/status/{tid}  - Module status")
    print("  GET  /api/runs                  - Run registry")
    print("  GET  /api/runs/{id}/trace       - Download trace.csv")
    print(f"Registry: {SQLITE_DB_FILE}")
    app.run(debug=env_flag("SPLLG_DEBUG"), host=host, port=port, use_reloader=False)
