"""
Experiment orchestration: simulate, ensemble, sweep and verify runs.

Every run writes trace.csv, summary.json and manifest.json into its output
directory through one RunWriter. trace.csv and summary.json are pure
functions of the resolved configuration; wall-clock metadata lives only in
manifest.json and events.jsonl.
"""

from __future__ import annotations

import math
import os
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import SOFTWARE
from .config import SimulationConfig
from .diagnostics import (
    MIN_MARTINGALE_PATHS,
    DiagnosticsTrace,
    EnsembleStatistics,
    ensemble_statistics,
    martingale_report,
    max_mass_drift,
    penalty_expectation,
    time_averaged_saturation,
    trace_for_path,
)
from .discretization import Discretization
from .dynamics import Ensemble, PathFailure, simulate_ensemble, simulate_path
from .errors import InvalidArgument
from .events import EventLog, log, log_perf
from .noise import growth_constants
from .output import (
    MANIFEST_FILE,
    SCHEMA_VERSION,
    SUMMARY_FILE,
    RunWriter,
    trace_columns,
)
from .store import record_run
from .verification import run_checks

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

MANIFEST_VERSION = 1
SWEEP_PARAMETERS = ("k", "dt", "ensemble_size")


@dataclass
class RunManifest:
    command: str
    config: SimulationConfig
    run_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])
    started_at: str = field(default_factory=lambda: datetime.now().isoformat())
    finished_at: Optional[str] = None
    wall_seconds: Optional[float] = None
    failures: List[PathFailure] = field(default_factory=list)
    options: Dict[str, Any] = field(default_factory=dict)

    def finish(self, started: float) -> None:
        self.finished_at = datetime.now().isoformat()
        self.wall_seconds = round(time.perf_counter() - started, 3)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "manifest_version": MANIFEST_VERSION,
            "run_id": self.run_id,
            "command": self.command,
            "software": SOFTWARE,
            "schema_version": SCHEMA_VERSION,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "options": self.options,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "wall_seconds": self.wall_seconds,
            "failures": [_failure_dict(f) for f in self.failures],
        }


@dataclass
class RunResult:
    exit_code: int
    out_dir: str
    manifest: RunManifest
    summary: Dict[str, Any]
    files: Dict[str, str] = field(default_factory=dict)


def _failure_dict(failure: PathFailure) -> Dict[str, Any]:
    return {"path": failure.path_index, "time": failure.time, "reason": failure.reason}


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

def _final_row(trace: DiagnosticsTrace) -> Dict[str, float]:
    row = {f"mass_{j + 1}": trace.masses[-1, j] for j in range(trace.masses.shape[1])}
    row.update({name: values[-1] for name, values in trace.columns.items()})
    return row


def path_summary(trace: DiagnosticsTrace, config: SimulationConfig, failure: Optional[PathFailure]) -> Dict[str, Any]:
    return {
        "columns": trace_columns(config.wavefunctions),
        "save_points": trace.size,
        "final_time": float(trace.times[-1]),
        "final": _final_row(trace),
        "max_relative_mass_drift": max_mass_drift(trace),
        "energy_residual": {
            "signed": float(trace.columns["energy_residual"][-1]),
            "relative": float(trace.relative_residual()[-1]),
        },
        "penalty_peak": float(trace.columns["penalty_peak"][-1]),
        "partial": failure is not None,
        "failure": _failure_dict(failure) if failure else None,
    }


def statistics_summary(stats: EnsembleStatistics) -> Dict[str, Any]:
    return {
        "completed": stats.count,
        "failures": stats.failures,
        "times": stats.times,
        "mean": stats.mean,
        "stderr": stats.stderr,
        "expectation_residual": stats.expectation_residual,
        "moments": stats.moments,
    }


def ensemble_summary(ensemble: Ensemble, traces: Sequence[DiagnosticsTrace]) -> Dict[str, Any]:
    config = ensemble.config
    failures = ensemble.failures
    summary: Dict[str, Any] = {
        "columns": trace_columns(config.wavefunctions),
        "paths": len(ensemble.trajectories),
        "failures": [_failure_dict(f) for f in failures],
        "partial": bool(failures),
    }
    if not ensemble.completed:
        summary["statistics"] = None
        return summary
    stats = ensemble_statistics(traces, failures=len(failures), moment_order=config.moment_order)
    estimate, stderr = penalty_expectation(ensemble.trajectories)
    summary["statistics"] = statistics_summary(stats)
    summary["penalty_expectation"] = {"estimate": estimate, "stderr": stderr}
    summary["time_averaged_saturation"] = time_averaged_saturation(traces)
    summary["final_relative_residual"] = float(np.mean([t.relative_residual()[-1] for t in traces if t.failure_time is None]))
    if len(ensemble.completed) >= MIN_MARTINGALE_PATHS:
        summary["martingale"] = martingale_report(ensemble.trajectories)
    else:
        summary["martingale"] = {"skipped": f"needs at least {MIN_MARTINGALE_PATHS} completed paths"}
    return summary


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def _finish(
    manifest: RunManifest,
    summary: Dict[str, Any],
    traces: Sequence[DiagnosticsTrace],
    out_dir: str,
    exit_code: int,
    started: float,
    events: EventLog,
    registry: Optional[str],
) -> RunResult:
    manifest.finish(started)
    summary = {"command": manifest.command, "software": SOFTWARE, "schema_version": SCHEMA_VERSION, **summary}
    with RunWriter(out_dir) as writer:
        if traces:
            writer.write_trace(traces)
        writer.write_json(SUMMARY_FILE, summary)
        writer.write_json(MANIFEST_FILE, manifest.to_dict())
        files = dict(writer.written)
    events.write("run_finish", run_id=manifest.run_id, exit_code=exit_code, wall_seconds=manifest.wall_seconds)
    registry = registry or os.getenv("SPLLG_REGISTRY")
    if registry:
        record_run(
            registry,
            {
                "run_id": manifest.run_id,
                "command": manifest.command,
                "out_dir": os.path.abspath(out_dir),
                "seed": manifest.config.seed,
                "exit_code": exit_code,
                "started_at": manifest.started_at,
                "finished_at": manifest.finished_at,
                "files": {name: os.path.abspath(path) for name, path in files.items()},
            },
        )
    log(manifest.command.upper(), f"run {manifest.run_id} finished with exit code {exit_code} -> {out_dir}")
    return RunResult(exit_code, out_dir, manifest, summary, files)


def _start(command: str, config: SimulationConfig, out_dir: str, **options: Any):
    manifest = RunManifest(command, config, options=options)
    events = EventLog(out_dir)
    events.write("run_start", run_id=manifest.run_id, command=command, seed=config.seed, options=options)
    log(command.upper(), f"run {manifest.run_id}: seed={config.seed} T={config.T:g} dt={config.dt:g}")
    return manifest, events, time.perf_counter()


def _record_failures(events: EventLog, failures: Sequence[PathFailure]) -> None:
    for failure in failures:
        events.write("path_failed", **_failure_dict(failure))


def run_simulate(config: SimulationConfig, out_dir: str, registry: Optional[str] = None) -> RunResult:
    manifest, events, started = _start("simulate", config, out_dir)
    disc = Discretization(config)
    trajectory = simulate_path(config, 0, disc)
    trace = trace_for_path(trajectory, disc)
    failures = [trajectory.failure] if trajectory.failure else []
    manifest.failures = failures
    _record_failures(events, failures)
    summary = path_summary(trace, config, trajectory.failure)
    summary["growth_constants"] = list(growth_constants(disc.noise))
    log_perf("simulate", started)
    code = EXIT_FAILURE if failures else EXIT_OK
    return _finish(manifest, summary, [trace], out_dir, code, started, events, registry)


def _ensemble_traces(config: SimulationConfig):
    disc = Discretization(config)
    ensemble = simulate_ensemble(config, disc)
    return ensemble, [trace_for_path(t, disc) for t in ensemble.trajectories]


def run_ensemble(config: SimulationConfig, out_dir: str, registry: Optional[str] = None) -> RunResult:
    manifest, events, started = _start("ensemble", config, out_dir)
    ensemble, traces = _ensemble_traces(config)
    manifest.failures = ensemble.failures
    _record_failures(events, ensemble.failures)
    summary = ensemble_summary(ensemble, traces)
    code = EXIT_FAILURE if ensemble.failures else EXIT_OK
    return _finish(manifest, summary, traces, out_dir, code, started, events, registry)


def sweep_config(config: SimulationConfig, parameter: str, value: float) -> SimulationConfig:
    if parameter not in SWEEP_PARAMETERS:
        raise InvalidArgument(f"sweep parameter must be one of {', '.join(SWEEP_PARAMETERS)}, got {parameter!r}")
    if parameter == "ensemble_size":
        if value != int(value):
            raise InvalidArgument(f"ensemble_size values must be integers, got {value}")
        return config.replace(ensemble_size=int(value))
    if parameter == "dt":
        steps = int(round(config.T / value))
        return config.replace(dt=value, save_every=math.gcd(steps, config.save_every) or 1)
    return config.replace(k=value)


def run_sweep(
    config: SimulationConfig,
    parameter: str,
    values: Sequence[float],
    out_dir: str,
    registry: Optional[str] = None,
) -> RunResult:
    """One ensemble per value; seeds are shared, so every value sees the same noise streams."""
    if not values:
        raise InvalidArgument("sweep needs at least one value")
    configs = [sweep_config(config, parameter, v) for v in values]
    manifest, events, started = _start("sweep", config, out_dir, parameter=parameter, values=list(values))
    rows: List[Dict[str, Any]] = []
    first_traces: List[DiagnosticsTrace] = []
    first_summary: Dict[str, Any] = {}
    for index, (value, cfg) in enumerate(zip(values, configs)):
        ensemble, traces = _ensemble_traces(cfg)
        manifest.failures.extend(ensemble.failures)
        _record_failures(events, ensemble.failures)
        summary = ensemble_summary(ensemble, traces)
        row: Dict[str, Any] = {parameter: value, "completed": len(ensemble.completed), "failures": len(ensemble.failures)}
        if ensemble.completed:
            row["penalty_expectation"] = summary["penalty_expectation"]["estimate"]
            row["penalty_stderr"] = summary["penalty_expectation"]["stderr"]
            row["final_relative_residual"] = summary["final_relative_residual"]
            row["expectation_residual"] = float(summary["statistics"]["expectation_residual"][-1])
            row["time_averaged_saturation"] = summary["time_averaged_saturation"]
        rows.append(row)
        if index == 0:
            first_traces, first_summary = traces, summary
        log("SWEEP", f"{parameter}={value:g}: {row.get('penalty_expectation', float('nan')):.6g} penalty expectation")
    for column in ("penalty_expectation", "final_relative_residual"):
        for prev, row in zip(rows, rows[1:]):
            if column in prev and column in row and row[column] != 0:
                row[f"{column}_ratio"] = abs(prev[column]) / abs(row[column])
    summary = {"parameter": parameter, "values": list(values), "table": rows, "first": first_summary}
    code = EXIT_FAILURE if manifest.failures else EXIT_OK
    return _finish(manifest, summary, first_traces, out_dir, code, started, events, registry)


def run_verify(
    config: SimulationConfig,
    out_dir: str,
    checks: Optional[Sequence[str]] = None,
    fault: Optional[str] = None,
    registry: Optional[str] = None,
) -> RunResult:
    manifest, events, started = _start("verify", config, out_dir, checks=list(checks or []), fault=fault)
    report = run_checks(config, checks, fault)
    for result in report.results:
        events.write("check_result", elapsed_s=round(result.elapsed, 3), **result.to_dict())
    ensemble, traces = _ensemble_traces(config)
    manifest.failures = ensemble.failures
    _record_failures(events, ensemble.failures)
    summary = {"verification": report.to_dict(), "ensemble": ensemble_summary(ensemble, traces)}
    code = EXIT_OK if report.passed and not ensemble.failures else EXIT_FAILURE
    return _finish(manifest, summary, traces, out_dir, code, started, events, registry)
