"""
Energy components, identity residuals and ensemble statistics.

Every component is recomputed from its definition on the saved coefficients;
nothing is read back from the stepper except the accumulated ledgers
(dissipation, Wiener and jump terms), which cannot be reconstructed from
snapshots.

The combined bracket is

    sum_j lambda_j |grad psi_j|^2 + |grad V|^2 + |m|_{H^1}^2 + 2 int w + int |H_s|^2
    + (k/2) int (|m|^2 - 1)^2 + int |G(m)|^2 - int m.s - int |m|^2

and bracket(t) + dissipation(t) + ledgers(t) - bracket(0) is the residual
of the discrete energy identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .discretization import Discretization
from .errors import InvalidArgument
from .fields import (
    MagnetizationState,
    SpinorState,
    anisotropy,
    density,
    poisson_coefficients,
    spin_density,
    stray_energy,
)
from .noise import g_eval, l2_norm_sq

ENERGY_FIELDS = (
    "grad_schrodinger",
    "potential",
    "exchange",
    "anisotropy",
    "stray",
    "penalty",
    "noise_energy",
    "coupling",
)
LEDGER_FIELDS = ("dissipation", "wiener_ledger", "jump_ledger")
TRACE_FIELDS = ENERGY_FIELDS + LEDGER_FIELDS + ("saturation", "penalty_peak", "energy_residual")

MIN_MARTINGALE_PATHS = 16


@dataclass(frozen=True)
class EnergyComponents:
    masses: Tuple[float, ...]
    grad_schrodinger: float
    potential: float
    exchange: float
    magnet_l2: float
    anisotropy: float
    stray: float
    penalty: float
    noise_energy: float
    coupling: float
    saturation: float

    @property
    def h1_norm_sq(self) -> float:
        return self.magnet_l2 + self.exchange

    def bracket(self) -> float:
        return (
            self.grad_schrodinger
            + self.potential
            + self.h1_norm_sq
            + self.anisotropy
            + self.stray
            + self.penalty
            + self.noise_energy
            - self.coupling
            - self.magnet_l2
        )


def mass(spinor: SpinorState, j: int) -> float:
    if not 0 <= j < spinor.count:
        raise InvalidArgument(f"wavefunction index {j} outside 0..{spinor.count - 1}")
    return float(np.sum(np.abs(spinor.coefficients[j]) ** 2))


def penalty_functional(m: np.ndarray, disc: Discretization) -> float:
    """int_D (|m|^2 - 1)^2."""
    dev = np.sum(m * m, axis=-1) - 1.0
    return disc.magnet_integral(dev * dev)


def saturation_check(m: np.ndarray) -> float:
    """sup_x | |m(x)| - 1 |."""
    return float(np.max(np.abs(np.linalg.norm(m, axis=-1) - 1.0)))


def energy_components(spinor: SpinorState, magnetization: MagnetizationState, disc: Discretization) -> EnergyComponents:
    config = disc.config
    sb, magnet = disc.schrodinger, disc.magnet
    beta = magnetization.coefficients
    m = magnet.synthesize(beta)

    grad = float(np.sum(spinor.weights[:, None] * sb.eigenvalues[None, :] * np.sum(np.abs(spinor.coefficients) ** 2, axis=2)))
    v_coeffs = poisson_coefficients(density(spinor, sb), disc.potential)
    potential = float(np.sum(disc.potential.eigenvalues * v_coeffs ** 2))

    exchange = magnetization.h1_seminorm_sq(magnet.eigenvalues)
    magnet_l2 = disc.magnet_integral(np.sum(m * m, axis=1))
    aniso = 2.0 * disc.magnet_integral(anisotropy(m)[0]) if config.anisotropy else 0.0
    stray = stray_energy(m, disc) if config.stray_field else 0.0
    penalty = 0.5 * config.k * penalty_functional(m, disc)
    noise_energy = 0.0
    if config.noise:
        noise_energy = sum(l2_norm_sq(disc.noise, g_eval(disc.noise, m, i)) for i in range(disc.noise.wiener_dim))
    coupling = 0.0
    if config.coupling:
        s = disc.restrict(spin_density(spinor, sb))
        coupling = disc.magnet_integral(np.sum(m * s, axis=1))
    return EnergyComponents(
        masses=tuple(float(x) for x in spinor.masses()),
        grad_schrodinger=grad,
        potential=potential,
        exchange=exchange,
        magnet_l2=magnet_l2,
        anisotropy=aniso,
        stray=stray,
        penalty=penalty,
        noise_energy=float(noise_energy),
        coupling=coupling,
        saturation=saturation_check(m),
    )


@dataclass(frozen=True)
class SpinCheck:
    max_excess: float
    equality_gap: Optional[float]


def spin_identity_check(spinor: SpinorState, disc: Discretization) -> SpinCheck:
    """max_x (|s| - rho); plus max_x ||s| - rho| when there is a single wavefunction."""
    rho = density(spinor, disc.schrodinger)
    s_norm = np.linalg.norm(spin_density(spinor, disc.schrodinger), axis=1)
    excess = float(np.max(s_norm - rho))
    gap = float(np.max(np.abs(s_norm - rho))) if spinor.count == 1 else None
    return SpinCheck(excess, gap)


# ---------------------------------------------------------------------------
# Per-path traces
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DiagnosticsTrace:
    path_index: int
    times: np.ndarray
    masses: np.ndarray
    columns: Dict[str, np.ndarray]
    brackets: np.ndarray
    failure_time: Optional[float] = None

    @property
    def size(self) -> int:
        return int(self.times.shape[0])

    def relative_residual(self) -> np.ndarray:
        scale = abs(self.brackets[0]) if self.brackets[0] != 0 else 1.0
        return self.columns["energy_residual"] / scale


def trace_for_path(trajectory, disc: Discretization) -> DiagnosticsTrace:
    rows = [energy_components(sp, mg, disc) for sp, mg in zip(trajectory.spinors, trajectory.magnetizations)]
    columns: Dict[str, np.ndarray] = {}
    for name in ENERGY_FIELDS:
        columns[name] = np.array([getattr(row, name) for row in rows], dtype=float)
    columns["dissipation"] = np.asarray(trajectory.dissipation, dtype=float)
    columns["wiener_ledger"] = np.asarray(trajectory.wiener_ledger, dtype=float)
    columns["jump_ledger"] = np.asarray(trajectory.jump_ledger, dtype=float)
    columns["saturation"] = np.array([row.saturation for row in rows], dtype=float)
    columns["penalty_peak"] = np.asarray(trajectory.penalty_peak, dtype=float)
    brackets = np.array([row.bracket() for row in rows], dtype=float)
    residual = brackets + columns["dissipation"] + columns["wiener_ledger"] + columns["jump_ledger"] - brackets[0]
    residual[0] = 0.0
    columns["energy_residual"] = residual
    masses = np.array([row.masses for row in rows], dtype=float).reshape(len(rows), -1)
    failure = trajectory.failure.time if trajectory.failure is not None else None
    return DiagnosticsTrace(trajectory.path_index, np.asarray(trajectory.times, dtype=float), masses, columns, brackets, failure)


def combined_energy_residual(trajectory, index: int, disc: Discretization) -> Tuple[float, float]:
    """(signed, relative) residual at save point ``index``."""
    if not 0 <= index < len(trajectory.times):
        raise InvalidArgument(f"save point {index} outside 0..{len(trajectory.times) - 1}")
    if index == 0:
        return 0.0, 0.0
    start = energy_components(trajectory.spinors[0], trajectory.magnetizations[0], disc).bracket()
    now = energy_components(trajectory.spinors[index], trajectory.magnetizations[index], disc).bracket()
    signed = now + trajectory.dissipation[index] + trajectory.wiener_ledger[index] + trajectory.jump_ledger[index] - start
    return float(signed), float(signed / (abs(start) if start != 0 else 1.0))


def max_mass_drift(trace: DiagnosticsTrace) -> float:
    initial = trace.masses[0]
    safe = np.where(initial > 0, initial, 1.0)
    return float(np.max(np.abs(trace.masses - initial[None, :]) / safe[None, :])) if trace.size else 0.0


# ---------------------------------------------------------------------------
# Ensemble statistics
# ---------------------------------------------------------------------------

def _mean_stderr(values: np.ndarray) -> Tuple[float, Optional[float]]:
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    if values.shape[0] < 2:
        return mean, None
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.shape[0]))


@dataclass(eq=False)
class EnsembleStatistics:
    times: np.ndarray
    count: int
    failures: int
    mean: Dict[str, np.ndarray]
    stderr: Dict[str, Optional[np.ndarray]]
    expectation_residual: np.ndarray
    moments: Dict[str, float] = field(default_factory=dict)


def ensemble_statistics(traces: Sequence[DiagnosticsTrace], failures: int = 0, moment_order: int = 1) -> EnsembleStatistics:
    """Mean and standard error over completed paths, per save point and column."""
    done = [t for t in traces if t.failure_time is None]
    if not done:
        raise InvalidArgument("no completed paths to summarize")
    times = done[0].times
    names = [f"mass_{j + 1}" for j in range(done[0].masses.shape[1])] + list(TRACE_FIELDS)
    stacks = {}
    for j in range(done[0].masses.shape[1]):
        stacks[f"mass_{j + 1}"] = np.stack([t.masses[:, j] for t in done])
    for name in TRACE_FIELDS:
        stacks[name] = np.stack([t.columns[name] for t in done])
    mean = {name: stacks[name].mean(axis=0) for name in names}
    if len(done) > 1:
        stderr = {name: stacks[name].std(axis=0, ddof=1) / math.sqrt(len(done)) for name in names}
    else:
        stderr = {name: None for name in names}
    brackets = np.stack([t.brackets for t in done])
    dissipation = stacks["dissipation"]
    expectation = (brackets + dissipation - brackets[:, :1]).mean(axis=0)
    moments = {
        "bracket_final": moment(brackets[:, -1], moment_order),
        "penalty_peak": moment(stacks["penalty_peak"][:, -1], moment_order),
    }
    return EnsembleStatistics(times, len(done), failures, mean, stderr, expectation, moments)


def moment(values, order: int) -> float:
    if order < 1:
        raise InvalidArgument(f"moment order must be >= 1, got {order}")
    return float(np.mean(np.asarray(values, dtype=float) ** order))


def penalty_expectation(trajectories) -> Tuple[float, Optional[float]]:
    """Monte Carlo estimate of E[sup_t int (|m|^2 - 1)^2] with its standard error."""
    peaks = [t.penalty_peak[-1] for t in trajectories if t.failure is None]
    if not peaks:
        raise InvalidArgument("no completed paths")
    return _mean_stderr(np.array(peaks))


def time_averaged_saturation(traces: Sequence[DiagnosticsTrace]) -> float:
    done = [t for t in traces if t.failure_time is None]
    return float(np.mean([np.mean(t.columns["saturation"]) for t in done]))


def martingale_report(trajectories, minimum: int = MIN_MARTINGALE_PATHS) -> Dict[str, Dict[str, object]]:
    done = [t for t in trajectories if t.failure is None]
    if len(done) < minimum:
        raise InvalidArgument(f"martingale statistics need at least {minimum} completed paths, got {len(done)}")
    report: Dict[str, Dict[str, object]] = {}
    for name in ("wiener_ledger", "jump_ledger"):
        values = np.array([getattr(t, name)[-1] for t in done], dtype=float)
        mean, se = _mean_stderr(values)
        if not np.any(values):
            z, trivial = 0.0, True
        elif se == 0:
            z, trivial = math.inf, False
        else:
            z, trivial = mean / se, False
        report[name] = {"mean": mean, "stderr": se, "z": z, "paths": len(done), "trivially_zero": trivial}
    return report
