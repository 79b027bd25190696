"""
Named invariant checks run by ``verify``.

Each check returns one or more CheckResult records with the measured values
and the criterion applied. Checks that only report (never gate the exit
status) carry ``gating=False``.

Oracles are independent of the spectral machinery they check: banded
finite-difference solves with Richardson extrapolation for the Poisson
equation, the closed-form two-point solution for the 1D stray field, a DOP853
reference for the noise-free LLG equation, and direct 3x3 products for the
Gilbert inverse.
"""

from __future__ import annotations

import math
import os
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.integrate import quad

from .config import SimulationConfig
from .diagnostics import (
    ENERGY_FIELDS,
    DiagnosticsTrace,
    combined_energy_residual,
    martingale_report,
    max_mass_drift,
    penalty_expectation,
    spin_identity_check,
    trace_for_path,
)
from .discretization import Discretization
from .dynamics import (
    GALERKIN,
    POINTWISE,
    Trajectory,
    euler_llg_solution,
    initial_magnetization,
    reference_llg_solution,
    simulate_ensemble,
    simulate_path,
)
from .errors import ConfigError, InvalidArgument
from .events import log
from .fields import (
    SpinorState,
    gilbert_inverse,
    poisson_coefficients,
    printed_gilbert_inverse,
    skew,
    stray_energy,
    stray_field_full,
    wavefunctions,
)
from .noise import path_streams, sample_jumps, wiener_increments
from .output import SCHEMA_FINGERPRINTS, SCHEMA_VERSION, render_trace_csv, schema_fingerprint

FAULTS = ("gilbert_inverse",)

# Reduced sizes for the Monte Carlo checks; skipped when they do not fit the geometry.
DESK_SCALE = {
    "n_modes_schrodinger": 8,
    "n_modes_magnet": 4,
    "n_modes_potential": 32,
    "grid_points": 129,
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    criterion: str
    measured: Dict[str, Any] = field(default_factory=dict)
    gating: bool = True
    elapsed: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "criterion": self.criterion,
            "measured": self.measured,
            "gating": self.gating,
        }


@dataclass
class VerificationReport:
    results: List[CheckResult]
    fault: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results if r.gating)

    @property
    def failed(self) -> List[str]:
        return [r.name for r in self.results if r.gating and not r.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "failed": self.failed,
            "fault": self.fault,
            "checks": [r.to_dict() for r in self.results],
        }


class VerificationContext:
    """Base config plus lazily shared runs."""

    def __init__(self, config: SimulationConfig, fault: Optional[str] = None):
        if fault is not None and fault not in FAULTS:
            raise InvalidArgument(f"unknown fault {fault!r}; known: {', '.join(FAULTS)}")
        self.config = config
        self.fault = fault

    @cached_property
    def disc(self) -> Discretization:
        return Discretization(self.config)

    def desk(self, **changes: Any) -> SimulationConfig:
        try:
            return self.config.replace(**DESK_SCALE, **changes)
        except ConfigError:
            return self.config.replace(**changes)

    @cached_property
    def deterministic(self) -> Tuple[Discretization, Trajectory, DiagnosticsTrace]:
        """Coupled noise-free run over T = 1 with dt = 1e-3."""
        config = self.config.replace(noise=False, T=1.0, dt=1e-3, save_every=10)
        disc = Discretization(config)
        trajectory = simulate_path(config, 0, disc)
        return disc, trajectory, trace_for_path(trajectory, disc)


def _fit_dt(dt: float, horizon: float) -> float:
    return horizon / max(1, math.ceil(horizon / dt - 1e-9))


def _ratios(values: Sequence[float]) -> List[float]:
    return [abs(values[i]) / abs(values[i + 1]) if values[i + 1] != 0 else math.inf for i in range(len(values) - 1)]


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def check_mass_conservation(ctx: VerificationContext) -> List[CheckResult]:
    disc, trajectory, trace = ctx.deterministic
    drift = max_mass_drift(trace)
    spinor = trajectory.spinors[0]
    psi = wavefunctions(spinor, disc.schrodinger)
    quadrature = np.array([disc.grid.integrate(np.sum(np.abs(psi[j]) ** 2, axis=1)) for j in range(spinor.count)])
    gap = float(np.max(np.abs(quadrature - spinor.masses())))
    return [
        CheckResult(
            "mass_conservation",
            trajectory.completed and drift <= 1e-10,
            "max relative mass drift <= 1e-10 (noise off, T=1, dt=1e-3)",
            {"max_relative_drift": drift, "completed": trajectory.completed},
        ),
        CheckResult(
            "mass_quadrature",
            gap <= 1e-10,
            "Parseval mass equals trapezoid quadrature within 1e-10",
            {"max_gap": gap},
        ),
    ]


def check_gilbert_inverse(ctx: VerificationContext, samples: int = 1000) -> CheckResult:
    rng = np.random.default_rng(ctx.config.seed)
    m = rng.normal(size=(samples, 3)) * rng.uniform(0.0, 3.0, size=(samples, 1))
    alphas = rng.uniform(0.1, 2.0, size=samples)
    inverse = printed_gilbert_inverse if ctx.fault == "gilbert_inverse" else gilbert_inverse
    worst_product = 0.0
    worst_norm = 0.0
    for vec, alpha in zip(m, alphas):
        inv = inverse(vec, alpha)
        product = (alpha * np.eye(3) + skew(vec)) @ inv
        worst_product = max(worst_product, float(np.max(np.abs(product - np.eye(3)))))
        worst_norm = max(worst_norm, float(np.max(np.sum(np.abs(inv), axis=1))) * alpha)
    return CheckResult(
        "gilbert_inverse",
        worst_product <= 1e-12 and worst_norm <= 2.0,
        "(alpha I + [m]x) inv within 1e-12 of I and ||inv||_inf <= 2/alpha",
        {"max_identity_error": worst_product, "max_alpha_scaled_norm": worst_norm, "samples": samples},
    )


def check_spin_identities(ctx: VerificationContext) -> CheckResult:
    disc, trajectory, _ = ctx.deterministic
    excess = max(spin_identity_check(sp, disc).max_excess for sp in trajectory.spinors)
    rng = np.random.default_rng(ctx.config.seed + 1)
    n = disc.schrodinger.size
    single = rng.normal(size=(1, n, 2)) + 1j * rng.normal(size=(1, n, 2))
    single /= math.sqrt(float(np.sum(np.abs(single) ** 2)))
    gap = spin_identity_check(SpinorState(single, np.ones(1)), disc).equality_gap
    return CheckResult(
        "spin_identities",
        excess <= 1e-10 and gap <= 1e-10,
        "|s| <= rho + 1e-10 on every saved state; ||s| - rho| <= 1e-10 for J = 1",
        {"max_excess": excess, "single_spinor_gap": gap},
    )


def _fd_poisson(source: Callable[[np.ndarray], np.ndarray], length: float, points: int):
    x = np.linspace(0.0, length, points)
    h = x[1] - x[0]
    interior = points - 2
    bands = np.zeros((3, interior))
    bands[0, 1:] = -1.0
    bands[1, :] = 2.0
    bands[2, :-1] = -1.0
    V = np.zeros(points)
    V[1:-1] = scipy.linalg.solve_banded((1, 1), bands, h * h * source(x[1:-1]))
    return x, V


def check_poisson_oracle(ctx: VerificationContext, points: int = 512, width: float = 0.3) -> CheckResult:
    disc = ctx.disc
    L = disc.geometry.schrodinger_length
    center = 0.5 * L

    def source(x):
        return np.exp(-(((x - center) / width) ** 2))

    coeffs = poisson_coefficients(source(disc.grid.points), disc.potential)
    x, coarse = _fd_poisson(source, L, points)
    _, fine = _fd_poisson(source, L, 2 * points - 1)
    oracle = (4.0 * fine[::2] - coarse) / 3.0
    spectral = coeffs @ disc.potential.basis.evaluate(x)
    error = float(np.max(np.abs(spectral - oracle)) / np.max(np.abs(oracle)))
    return CheckResult(
        "poisson_oracle",
        error <= 1e-6,
        f"spectral -V''=rho within 1e-6 of Richardson FD on {points} points",
        {"relative_error": error},
    )


def check_stray_oracle(ctx: VerificationContext, width: float = 0.25) -> CheckResult:
    disc = ctx.disc
    geometry = disc.geometry
    a, b, L = geometry.magnet_start, geometry.magnet_end, geometry.schrodinger_length
    center = 0.5 * (a + b)

    def bump(x):
        return np.exp(-(((x - center) / width) ** 2))

    m = np.zeros((disc.magnet_grid.size, 3))
    m[:, 0] = bump(disc.magnet_grid.points)
    spectral = stray_field_full(m, disc)[:, 0]
    total = quad(lambda s: float(bump(s)), a, b, epsabs=1e-14, epsrel=1e-13)[0]
    f = np.where(disc.indicator > 0, bump(disc.grid.points), 0.0)
    exact = -f + total / L
    error = float(np.max(np.abs(spectral - exact)) / np.max(np.abs(exact)))

    identity = 0.0
    m0 = disc.magnet.synthesize(initial_magnetization(ctx.config, disc).coefficients)
    for field_m in (m, m0):
        H = stray_field_full(field_m, disc)[disc.magnet_nodes]
        lhs = -disc.magnet_integral(np.sum(field_m * H, axis=1))
        rhs = stray_energy(field_m, disc)
        identity = max(identity, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return CheckResult(
        "stray_oracle",
        error <= 1e-6 and identity <= 1e-8,
        "stray field within 1e-6 of the two-point solution; -int m.H_s = int |H_s|^2 within 1e-8",
        {"relative_error": error, "identity_relative_gap": identity},
    )


def check_energy_refinement(
    ctx: VerificationContext, steps: Sequence[float] = (4e-3, 2e-3, 1e-3), horizon: float = 1.0
) -> List[CheckResult]:
    results = []
    for form, gating in ((GALERKIN, True), (POINTWISE, False)):
        residuals = []
        completed = True
        for dt in steps:
            config = ctx.config.replace(
                noise=False, T=horizon, dt=dt, save_every=int(round(horizon / dt)), gilbert_form=form
            )
            disc = Discretization(config)
            trajectory = simulate_path(config, 0, disc)
            completed = completed and trajectory.completed
            _, relative = combined_energy_residual(trajectory, len(trajectory.times) - 1, disc)
            residuals.append(relative)
        ratios = _ratios(residuals)
        passed = completed and all(1.5 <= r <= 3.0 for r in ratios)
        results.append(
            CheckResult(
                f"energy_refinement_{form}",
                passed,
                "relative energy residual at T ratios in [1.5, 3] under dt halving",
                {"dt": list(steps), "relative_residual": residuals, "ratios": ratios, "completed": completed},
                gating=gating,
            )
        )

    _, _, trace = ctx.deterministic
    dissipation = trace.columns["dissipation"]
    negatives = [name for name in ENERGY_FIELDS if name != "coupling" and np.min(trace.columns[name]) < 0]
    monotone = bool(np.all(np.diff(dissipation) >= 0))
    results.append(
        CheckResult(
            "energy_components",
            monotone and not negatives,
            "energy components nonnegative (coupling excepted); dissipation nondecreasing",
            {"negative_components": negatives, "dissipation_monotone": monotone},
        )
    )
    return results


def penalty_step(k: float, stiffness_factor: float, horizon: float, min_steps: int = 10) -> float:
    """Largest step dividing ``horizon`` with dt <= stiffness_factor / (2k) and at least ``min_steps`` steps.

    The penalty relaxes by the same fraction per step for every k.
    """
    cap = horizon / min_steps
    if k > 0:
        cap = min(cap, 0.5 * stiffness_factor / k)
    return _fit_dt(cap, horizon)


def check_penalty_decay(
    ctx: VerificationContext,
    ks: Sequence[float] = (10.0, 100.0, 1000.0),
    paths: int = 32,
    horizon: float = 0.05,
    alpha: float = 0.1,
) -> CheckResult:
    estimates, errors, steps = [], [], []
    workers = max(ctx.config.workers, min(4, os.cpu_count() or 1))
    for k in ks:
        dt = penalty_step(k, ctx.config.stiffness_factor, horizon)
        count = int(round(horizon / dt))
        config = ctx.desk(
            noise=True, noise_family="linear", jump_intensity=0.0, k=k, alpha=alpha, T=horizon, dt=dt,
            m0_tilt=0.0, ensemble_size=paths, save_every=count, workers=workers,
        )
        ensemble = simulate_ensemble(config)
        estimate, stderr = penalty_expectation(ensemble.trajectories)
        estimates.append(estimate)
        errors.append(stderr)
        steps.append(count)
    ratios = _ratios(estimates)
    decreasing = all(estimates[i] > estimates[i + 1] for i in range(len(estimates) - 1))
    return CheckResult(
        "penalty_decay",
        decreasing and all(5.0 <= r <= 20.0 for r in ratios),
        "E[sup_t int (|m|^2-1)^2] strictly decreasing in k with ratios in [5, 20]",
        {"k": list(ks), "steps": steps, "estimate": estimates, "stderr": errors, "ratios": ratios, "paths": paths},
    )


def check_martingale(ctx: VerificationContext, paths: int = 256, horizon: float = 0.05) -> CheckResult:
    dt = _fit_dt(ctx.config.dt, horizon)
    config = ctx.desk(T=horizon, dt=dt, ensemble_size=paths, save_every=int(round(horizon / dt)))
    report = martingale_report(simulate_ensemble(config).trajectories)
    passed = all(entry["trivially_zero"] or abs(entry["z"]) <= 3.0 for entry in report.values())
    return CheckResult(
        "martingale_zero_mean",
        passed,
        "final Wiener and jump ledgers within 3 standard errors of 0 (or identically zero)",
        {"noise": config.noise, **report},
    )


def check_llg_convergence(
    ctx: VerificationContext, steps: Sequence[float] = (4e-3, 2e-3, 1e-3), horizon: float = 0.1
) -> CheckResult:
    config, disc = ctx.config, ctx.disc
    m0 = initial_magnetization(config, disc)
    kwargs = dict(stray=config.stray_field, uniaxial=config.anisotropy, form=config.gilbert_form)
    reference = reference_llg_solution(m0, horizon, disc, config.alpha, config.k, **kwargs)
    errors = []
    for dt in steps:
        state, _ = euler_llg_solution(m0, horizon, dt, disc, config.alpha, config.k, **kwargs)
        errors.append(float(np.max(np.abs(state.coefficients - reference.coefficients))))
    ratios = _ratios(errors)
    return CheckResult(
        "llg_convergence",
        all(1.7 <= r <= 2.3 for r in ratios),
        "noise-free LLG error against DOP853 reference halves with dt (ratios in [1.7, 2.3])",
        {"dt": list(steps), "error": errors, "ratios": ratios},
    )


def check_wiener_variance(ctx: VerificationContext, draws: int = 1_000_000) -> CheckResult:
    spec, dt = ctx.disc.noise, ctx.config.dt
    stream, _ = path_streams(ctx.config.seed, 0)
    increments = wiener_increments(spec, dt, math.ceil(draws / spec.wiener_dim), stream)
    relative = abs(float(np.var(increments)) / dt - 1.0)
    return CheckResult(
        "wiener_variance",
        relative <= 0.01,
        f"sample variance of {draws} Wiener increments within 1% of dt",
        {"relative_deviation": relative, "draws": int(increments.size)},
    )


def check_jump_count(ctx: VerificationContext, paths: int = 100_000) -> CheckResult:
    spec, horizon = ctx.disc.noise, ctx.config.T
    counts = np.empty(paths)
    for p in range(paths):
        _, stream = path_streams(ctx.config.seed, p)
        counts[p] = sample_jumps(spec, horizon, stream).count
    expected = spec.jump_intensity * horizon
    mean = float(np.mean(counts))
    if expected == 0.0:
        passed, relative = mean == 0.0, 0.0
    else:
        relative = abs(mean / expected - 1.0)
        passed = relative <= 0.01
    return CheckResult(
        "jump_count",
        passed,
        f"mean jump count over {paths} paths within 1% of lambda_P T",
        {"mean": mean, "expected": expected, "relative_deviation": relative},
    )


def check_reproducibility(ctx: VerificationContext, paths: int = 4, steps: int = 10) -> CheckResult:
    dt = ctx.config.dt
    base = ctx.desk(T=steps * dt, ensemble_size=paths, save_every=steps // 2 if steps % 2 == 0 else 1)
    renders = []
    for workers in (1, 2, 1):
        config = base.replace(workers=workers)
        disc = Discretization(config)
        ensemble = simulate_ensemble(config, disc)
        renders.append(render_trace_csv([trace_for_path(t, disc) for t in ensemble.trajectories]))
    identical = all(r == renders[0] for r in renders[1:])
    return CheckResult(
        "reproducibility",
        identical,
        "trace.csv byte-identical across reruns and worker counts",
        {"runs": len(renders), "bytes": len(renders[0].encode("utf-8"))},
    )


def check_trace_schema(ctx: VerificationContext) -> CheckResult:
    actual = schema_fingerprint()
    registered = SCHEMA_FINGERPRINTS.get(SCHEMA_VERSION)
    return CheckResult(
        "trace_schema",
        actual == registered,
        "trace column template matches the fingerprint registered for its schema version",
        {"schema_version": SCHEMA_VERSION, "fingerprint": actual, "registered": registered},
    )


CHECKS: "OrderedDict[str, Callable[[VerificationContext], Any]]" = OrderedDict(
    [
        ("trace_schema", check_trace_schema),
        ("gilbert_inverse", check_gilbert_inverse),
        ("mass_conservation", check_mass_conservation),
        ("spin_identities", check_spin_identities),
        ("poisson_oracle", check_poisson_oracle),
        ("stray_oracle", check_stray_oracle),
        ("energy_refinement", check_energy_refinement),
        ("llg_convergence", check_llg_convergence),
        ("wiener_variance", check_wiener_variance),
        ("jump_count", check_jump_count),
        ("martingale", check_martingale),
        ("penalty_decay", check_penalty_decay),
        ("reproducibility", check_reproducibility),
    ]
)


def run_checks(
    config: SimulationConfig, names: Optional[Sequence[str]] = None, fault: Optional[str] = None
) -> VerificationReport:
    selected = list(CHECKS) if not names else list(names)
    unknown = [n for n in selected if n not in CHECKS]
    if unknown:
        raise InvalidArgument(f"unknown check(s) {', '.join(unknown)}; known: {', '.join(CHECKS)}")
    ctx = VerificationContext(config, fault)
    results: List[CheckResult] = []
    for name in selected:
        started = time.perf_counter()
        produced = CHECKS[name](ctx)
        produced = produced if isinstance(produced, list) else [produced]
        elapsed = time.perf_counter() - started
        for result in produced:
            result.elapsed = elapsed / len(produced)
            status = "PASS" if result.passed else ("FAIL" if result.gating else "INFO")
            log("VERIFY", f"{result.name}: {status} ({elapsed:.2f}s)")
        results.extend(produced)
    return VerificationReport(results, fault)
