"""
Shared entry point for the experiment modules.

A module is launched as ``python <module>.py <config.json>``. The config file
carries the module ``parameters`` plus ``database_path`` and ``thread_id``
added by the Backend. The module prints exactly one JSON status object.
"""

import json
import os
import sys

MODULE_ROOT = os.path.abspath(os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", ".."))
if MODULE_ROOT not in sys.path:
    sys.path.insert(0, MODULE_ROOT)

from spllg.config import config_from_mapping  # noqa: E402
from spllg.errors import ConfigError, SpllgError  # noqa: E402


def fail(message, code=1):
    print(json.dumps({"status": "error", "message": message}))
    sys.exit(code)


def read_module_config(argv):
    if len(argv) < 2:
        fail("No config file provided")
    try:
        with open(argv[1], "r", encoding="utf-8") as handle:
            return json.load(handle)
    except Exception as exc:
        fail(f"Failed to read config: {exc}")


def simulation_config(params):
    """The ``config`` parameter is either a JSON object or a path to a config/manifest file."""
    raw = params.get("config") or {}
    if isinstance(raw, str):
        with open(raw, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    if params.get("seed") not in (None, ""):
        raw = dict(raw.get("config", raw) if "manifest_version" in raw else raw)
        raw["seed"] = int(params["seed"])
    return config_from_mapping(raw, strict=bool(params.get("strict", False)))


def run(module_id, launch):
    """``launch(config, params, out_dir, registry)`` returns a harness RunResult."""
    module_config = read_module_config(sys.argv)
    params = module_config.get("parameters") or {}
    registry = module_config.get("database_path") or os.getenv("SPLLG_REGISTRY")
    thread_id = module_config.get("thread_id") or "local"
    out_dir = params.get("out_dir") or os.path.join(MODULE_ROOT, "runs", f"{module_id}_{thread_id}")
    try:
        config = simulation_config(params)
        result = launch(config, params, out_dir, registry)
    except ConfigError as exc:
        fail(f"config error: {exc}", code=2)
    except (SpllgError, OSError, ValueError) as exc:
        fail(str(exc))
    print(json.dumps({
        "status": "success" if result.exit_code == 0 else "error",
        "message": f"{module_id} finished with exit code {result.exit_code}",
        "data": {
            "run_id": result.manifest.run_id,
            "exit_code": result.exit_code,
            "out_dir": os.path.abspath(out_dir),
            "files": result.files,
        },
    }, indent=2))
