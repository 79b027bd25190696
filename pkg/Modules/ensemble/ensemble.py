#!/usr/bin/env python3
"""
Ensemble - experiment module wrapping spllg.harness.run_ensemble.
"""

import os
import sys

MODULE_DIR = os.path.dirname(os.path.abspath(__file__))
SHARED_DIR = os.path.abspath(os.path.join(MODULE_DIR, "..", "_shared"))
if SHARED_DIR not in sys.path:
    sys.path.insert(0, SHARED_DIR)
from module_entry import run  # noqa: E402

from spllg.harness import run_ensemble  # noqa: E402


def main():
    run("ensemble", lambda config, params, out_dir, registry: run_ensemble(config, out_dir, registry))


if __name__ == "__main__":
    main()
