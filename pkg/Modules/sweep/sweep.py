#!/usr/bin/env python3
"""
Sweep - experiment module wrapping spllg.harness.run_sweep.
"""

import os
import sys

MODULE_DIR = os.path.dirname(os.path.abspath(__file__))
SHARED_DIR = os.path.abspath(os.path.join(MODULE_DIR, "..", "_shared"))
if SHARED_DIR not in sys.path:
    sys.path.insert(0, SHARED_DIR)
from module_entry import run  # noqa: E402

from spllg.harness import run_sweep  # noqa: E402


def _values(raw):
    if isinstance(raw, str):
        return [float(v) for v in raw.split(",") if v.strip()]
    return [float(v) for v in raw or []]


def launch(config, params, out_dir, registry):
    return run_sweep(config, params.get("parameter") or "k", _values(params.get("values")), out_dir, registry)


def main():
    run("sweep", launch)


if __name__ == "__main__":
    main()
