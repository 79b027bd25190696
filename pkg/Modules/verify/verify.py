#!/usr/bin/env python3
"""
Verify - experiment module wrapping spllg.harness.run_verify.
"""

import os
import sys

MODULE_DIR = os.path.dirname(os.path.abspath(__file__))
SHARED_DIR = os.path.abspath(os.path.join(MODULE_DIR, "..", "_shared"))
if SHARED_DIR not in sys.path:
    sys.path.insert(0, SHARED_DIR)
from module_entry import run  # noqa: E402

from spllg.harness import run_verify  # noqa: E402


def launch(config, params, out_dir, registry):
    checks = params.get("checks") or None
    if isinstance(checks, str):
        checks = [c.strip() for c in checks.split(",") if c.strip()]
    return run_verify(config, out_dir, checks, params.get("fault") or None, registry)


def main():
    run("verify", launch)


if __name__ == "__main__":
    main()
