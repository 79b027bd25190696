"""
Time stepping for the coupled spinor/magnetization system.

One coupled step of length dt is a Strang splitting:

    1. half LLG step with the spin density of the incoming spinors,
    2. Coulomb potential from the incoming density, then a Cayley
       (Crank-Nicolson) Schrodinger step with the half-stepped m,
    3. second half LLG step with the spin density of the new spinors.

Each LLG half step is a forward Euler-Maruyama step of the Gilbert form

    (alpha I + [m]_x) dm = f(m) dt - sum_i G_i(m) dW_i - int F(m, l) N~(dt, dl)

resolved either pointwise on the magnet grid or in coefficient space.
Noise is drawn per half step; jump events are assigned to the half step
containing their time.
"""

from __future__ import annotations

import os
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .config import SimulationConfig
from .diagnostics import penalty_functional
from .discretization import Discretization
from .errors import InvalidArgument, NumericalFailure
from .events import log, log_perf
from .fields import (
    PAULI,
    MagnetizationState,
    SpinorState,
    coulomb_potential,
    density,
    effective_field,
    gilbert_inverse,
    skew,
    spin_density,
)
from .noise import (
    NoiseRealization,
    NoiseSpec,
    compensator_field,
    f_eval,
    g_eval,
    sample_realization,
    stratonovich_correction,
)

POINTWISE = "pointwise"
GALERKIN = "galerkin"
GILBERT_FORMS = (POINTWISE, GALERKIN)

HALF_STEPS = 2

InverseFn = Callable[[np.ndarray, float], np.ndarray]


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

def initial_spinor(config: SimulationConfig, disc: Discretization) -> SpinorState:
    """Orthonormal spinors built from sine modes j and j+1 with a tilted spin."""
    J, n = config.wavefunctions, config.n_modes_schrodinger
    raw = np.zeros((J, n, 2), dtype=complex)
    for j in range(J):
        angle = (j + 1) * config.psi_spin_angle
        spin = np.array([np.cos(angle / 2), np.exp(1j * j / 3) * np.sin(angle / 2)])
        raw[j, j] = spin
        if j + 1 < n:
            raw[j, j + 1] = 0.5 * spin[::-1]
    q, r = np.linalg.qr(raw.reshape(J, 2 * n).T)
    diag = np.diag(r)
    q = q * (diag / np.abs(diag))[None, :]
    return SpinorState(q.T.reshape(J, n, 2), config.occupation_weights)


def initial_magnetization(config: SimulationConfig, disc: Discretization) -> MagnetizationState:
    geometry = disc.geometry
    xi = (disc.magnet_grid.points - geometry.magnet_start) / geometry.magnet_length
    eps = config.m0_tilt
    m = np.stack([eps * np.cos(np.pi * xi), eps * np.cos(2 * np.pi * xi), np.ones_like(xi)], axis=1)
    m /= np.linalg.norm(m, axis=1)[:, None]
    return MagnetizationState(disc.magnet.project(m))


# ---------------------------------------------------------------------------
# Schrodinger step
# ---------------------------------------------------------------------------

def schrodinger_generator(V: np.ndarray, m_full: Optional[np.ndarray], disc: Discretization) -> np.ndarray:
    """Hermitian matrix of -Laplacian/2 + V - (m.sigma)/2 on the flat index h*2+s."""
    theta = disc.schrodinger.values
    w = disc.grid.weights
    scalar = 0.5 * np.diag(disc.schrodinger.eigenvalues) + (theta * (w * V)) @ theta.T
    H = np.kron(scalar, np.eye(2)).astype(complex)
    if m_full is not None:
        weighted = w * disc.indicator
        for a in range(3):
            block = (theta * (weighted * m_full[:, a])) @ theta.T
            H -= 0.5 * np.kron(block, PAULI[a])
    return H


def schrodinger_step(
    spinor: SpinorState, V: np.ndarray, m_full: Optional[np.ndarray], dt: float, disc: Discretization
) -> SpinorState:
    """Cayley step (I + i dt H/2) alpha' = (I - i dt H/2) alpha for every wavefunction at once.

    ``m_full`` is the magnetization on the Schrodinger grid (zero outside the
    magnet), or None to drop the spin coupling. Negative ``dt`` steps backwards.
    """
    J, n, _ = spinor.coefficients.shape
    H = schrodinger_generator(V, m_full, disc)
    eye = np.eye(2 * n)
    X = spinor.coefficients.reshape(J, 2 * n).T
    try:
        Y = scipy.linalg.solve(eye + 0.5j * dt * H, (eye - 0.5j * dt * H) @ X)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"Schrodinger solve failed: {exc}") from exc
    if not np.all(np.isfinite(Y)):
        raise NumericalFailure("non-finite spinor coefficients")
    return spinor.with_coefficients(Y.T.reshape(J, n, 2))


# ---------------------------------------------------------------------------
# LLG step
# ---------------------------------------------------------------------------

class GilbertOperator:
    """Coefficients of (alpha I + [m]_x)^-1 applied to a magnet-grid field."""

    def __init__(self, m: np.ndarray, alpha: float, disc: Discretization, form: str = POINTWISE,
                 inverse: InverseFn = gilbert_inverse):
        if form not in GILBERT_FORMS:
            raise InvalidArgument(f"unknown Gilbert form {form!r}")
        self.magnet = disc.magnet
        self.form = form
        if form == POINTWISE:
            self._matrices = inverse(m, alpha)
            return
        S = self.magnet.size
        coupling = np.einsum("hp,gp,pab->hagb", self.magnet.analysis, self.magnet.values, skew(m))
        system = alpha * np.eye(3 * S) + coupling.reshape(3 * S, 3 * S)
        try:
            self._lu = scipy.linalg.lu_factor(system, check_finite=True)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"Gilbert system could not be factored: {exc}") from exc

    def apply(self, field: np.ndarray) -> np.ndarray:
        if self.form == POINTWISE:
            return self.magnet.project(np.einsum("pab,pb->pa", self._matrices, field))
        rhs = self.magnet.project(field).reshape(-1)
        return scipy.linalg.lu_solve(self._lu, rhs).reshape(-1, 3)


def llg_forcing(m: np.ndarray, H: np.ndarray, k: float, noise: Optional[NoiseSpec] = None) -> np.ndarray:
    """f = H - k(|m|^2 - 1) m, minus the Stratonovich-to-Ito correction when noise is on."""
    forcing = H - k * (np.sum(m * m, axis=1) - 1.0)[:, None] * m
    if noise is not None:
        forcing = forcing - stratonovich_correction(noise, m)
    return forcing


def llg_drift(
    magnetization: MagnetizationState,
    H: np.ndarray,
    disc: Discretization,
    alpha: float,
    k: float,
    noise: Optional[NoiseSpec] = None,
    form: str = POINTWISE,
) -> np.ndarray:
    m = disc.magnet.synthesize(magnetization.coefficients)
    return GilbertOperator(m, alpha, disc, form).apply(llg_forcing(m, H, k, noise))


@dataclass(frozen=True, eq=False)
class LLGStepResult:
    magnetization: MagnetizationState
    dissipation: float
    wiener: float
    jump: float


def llg_step(
    magnetization: MagnetizationState,
    H: np.ndarray,
    dt: float,
    disc: Discretization,
    alpha: float,
    k: float,
    noise: Optional[NoiseSpec] = None,
    dW: Optional[np.ndarray] = None,
    marks: Optional[np.ndarray] = None,
    form: str = POINTWISE,
    inverse: InverseFn = gilbert_inverse,
) -> LLGStepResult:
    """One Euler-Maruyama step; ledgers are paired with the drift velocity of the step."""
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt}")
    magnet = disc.magnet
    weights = disc.magnet_weights
    beta = magnetization.coefficients
    m = magnet.synthesize(beta)
    op = GilbertOperator(m, alpha, disc, form, inverse)
    drift = op.apply(llg_forcing(m, H, k, noise))
    increment = drift * dt
    wiener = jump = 0.0

    noisy = noise is not None and (dW is not None or noise.has_jumps)
    velocity = magnet.synthesize(drift) if noisy else None
    if noise is not None and dW is not None:
        for i in range(noise.wiener_dim):
            g = g_eval(noise, m, i)
            increment = increment - op.apply(g) * dW[i]
            wiener += 2.0 * dW[i] * float(weights @ np.sum(velocity * g, axis=1))
    if noise is not None and noise.has_jumps:
        for mark in marks if marks is not None else ():
            jump_field = f_eval(noise, m, mark)
            increment = increment - op.apply(jump_field)
            jump += 2.0 * float(weights @ np.sum(velocity * jump_field, axis=1))
        comp = compensator_field(noise, m)
        increment = increment + op.apply(comp) * dt
        jump -= 2.0 * dt * float(weights @ np.sum(velocity * comp, axis=1))

    updated = beta + increment
    if not np.all(np.isfinite(updated)):
        raise NumericalFailure("non-finite magnetization coefficients; dt may be too large for k")
    dissipation = 2.0 * alpha * float(np.sum(drift * drift)) * dt
    return LLGStepResult(MagnetizationState(updated), dissipation, wiener, jump)


# ---------------------------------------------------------------------------
# Coupled step
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoupledState:
    time: float
    spinor: SpinorState
    magnetization: MagnetizationState
    dissipation: float = 0.0
    wiener_ledger: float = 0.0
    jump_ledger: float = 0.0
    penalty_peak: float = 0.0


@dataclass(frozen=True, eq=False)
class StepNoise:
    """Wiener increments and marks for the two half steps of one coupled step."""

    increments: np.ndarray
    marks: Tuple[np.ndarray, np.ndarray]

    @classmethod
    def from_realization(cls, realization: NoiseRealization, step: int) -> "StepNoise":
        first = HALF_STEPS * step
        return cls(
            np.stack([realization.increment(first + h) for h in range(HALF_STEPS)]),
            tuple(realization.marks_in(first + h) for h in range(HALF_STEPS)),
        )


def initial_state(config: SimulationConfig, disc: Discretization) -> CoupledState:
    spinor = initial_spinor(config, disc)
    magnetization = initial_magnetization(config, disc)
    peak = penalty_functional(disc.magnet.synthesize(magnetization.coefficients), disc)
    return CoupledState(0.0, spinor, magnetization, penalty_peak=peak)


def coupled_step(
    state: CoupledState,
    dt: float,
    disc: Discretization,
    step_noise: Optional[StepNoise] = None,
) -> CoupledState:
    config = disc.config
    noise = disc.noise if (config.noise and step_noise is not None) else None
    sb, magnet = disc.schrodinger, disc.magnet
    half = 0.5 * dt

    def spin_on_magnet(spinor: SpinorState) -> Optional[np.ndarray]:
        return disc.restrict(spin_density(spinor, sb)) if config.coupling else None

    def half_step(magnetization: MagnetizationState, s: Optional[np.ndarray], index: int) -> LLGStepResult:
        H = effective_field(magnetization, s, disc, stray=config.stray_field, uniaxial=config.anisotropy)
        return llg_step(
            magnetization, H, half, disc, config.alpha, config.k,
            noise=noise,
            dW=step_noise.increments[index] if noise is not None else None,
            marks=step_noise.marks[index] if noise is not None else None,
            form=config.gilbert_form,
        )

    try:
        first = half_step(state.magnetization, spin_on_magnet(state.spinor), 0)
        V = coulomb_potential(density(state.spinor, sb), disc.potential)
        m_full = disc.embed(magnet.synthesize(first.magnetization.coefficients)) if config.coupling else None
        spinor = schrodinger_step(state.spinor, V, m_full, dt, disc)
        second = half_step(first.magnetization, spin_on_magnet(spinor), 1)
    except NumericalFailure as exc:
        raise exc.at(state.time + dt) from exc

    penalty = penalty_functional(magnet.synthesize(second.magnetization.coefficients), disc)
    return CoupledState(
        time=state.time + dt,
        spinor=spinor,
        magnetization=second.magnetization,
        dissipation=state.dissipation + first.dissipation + second.dissipation,
        wiener_ledger=state.wiener_ledger + first.wiener + second.wiener,
        jump_ledger=state.jump_ledger + first.jump + second.jump,
        penalty_peak=max(state.penalty_peak, penalty),
    )


# ---------------------------------------------------------------------------
# Paths and ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathFailure:
    path_index: int
    time: float
    reason: str


@dataclass(eq=False)
class Trajectory:
    """Save-point snapshots of one path; ledger arrays are cumulative."""

    path_index: int
    times: np.ndarray
    spinors: List[SpinorState]
    magnetizations: List[MagnetizationState]
    dissipation: np.ndarray
    wiener_ledger: np.ndarray
    jump_ledger: np.ndarray
    penalty_peak: np.ndarray
    failure: Optional[PathFailure] = None

    @property
    def completed(self) -> bool:
        return self.failure is None

    def state(self, index: int) -> CoupledState:
        return CoupledState(
            float(self.times[index]),
            self.spinors[index],
            self.magnetizations[index],
            float(self.dissipation[index]),
            float(self.wiener_ledger[index]),
            float(self.jump_ledger[index]),
            float(self.penalty_peak[index]),
        )


class _Recorder:
    def __init__(self):
        self.times: List[float] = []
        self.states: List[CoupledState] = []

    def save(self, state: CoupledState, t: float) -> None:
        self.times.append(t)
        self.states.append(state)

    def trajectory(self, path_index: int, failure: Optional[PathFailure]) -> Trajectory:
        states = self.states
        return Trajectory(
            path_index=path_index,
            times=np.array(self.times),
            spinors=[s.spinor for s in states],
            magnetizations=[s.magnetization for s in states],
            dissipation=np.array([s.dissipation for s in states]),
            wiener_ledger=np.array([s.wiener_ledger for s in states]),
            jump_ledger=np.array([s.jump_ledger for s in states]),
            penalty_peak=np.array([s.penalty_peak for s in states]),
            failure=failure,
        )


def simulate_path(
    config: SimulationConfig,
    path_index: int = 0,
    disc: Optional[Discretization] = None,
) -> Trajectory:
    """Run one path to T. A numerical failure ends the path early and is recorded, not raised."""
    if path_index < 0:
        raise InvalidArgument(f"path index must be >= 0, got {path_index}")
    disc = disc or Discretization(config)
    steps, dt = config.step_count, config.dt
    realization = None
    if config.noise and steps > 0:
        realization = sample_realization(disc.noise, dt, steps, config.seed, path_index, per_step=HALF_STEPS)

    state = initial_state(config, disc)
    recorder = _Recorder()
    recorder.save(state, 0.0)
    failure = None
    for n in range(steps):
        step_noise = StepNoise.from_realization(realization, n) if realization is not None else None
        try:
            state = coupled_step(state, dt, disc, step_noise)
        except NumericalFailure as exc:
            failure = PathFailure(path_index, (n + 1) * dt, exc.detail)
            log("PATH", f"path {path_index} failed at t={failure.time:.6g}: {exc.detail}")
            break
        if (n + 1) % config.save_every == 0:
            recorder.save(state, (n + 1) * dt)
    return recorder.trajectory(path_index, failure)


def resolve_workers(requested: int) -> int:
    cap = os.getenv("SPLLG_MAX_WORKERS")
    workers = max(1, int(requested))
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            log("CONFIG", f"ignoring non-integer SPLLG_MAX_WORKERS={cap!r}")
    return workers


@dataclass(eq=False)
class Ensemble:
    config: SimulationConfig
    trajectories: List[Trajectory] = field(default_factory=list)

    @property
    def completed(self) -> List[Trajectory]:
        return [t for t in self.trajectories if t.completed]

    @property
    def failures(self) -> List[PathFailure]:
        return [t.failure for t in self.trajectories if t.failure is not None]


def simulate_ensemble(
    config: SimulationConfig,
    disc: Optional[Discretization] = None,
    paths: Optional[Sequence[int]] = None,
) -> Ensemble:
    """Independent paths 0..M-1, ordered by path index whatever the worker count."""
    disc = disc or Discretization(config)
    indices = list(range(config.ensemble_size)) if paths is None else list(paths)
    workers = resolve_workers(config.workers)
    started = _time.perf_counter()

    def run(index: int) -> Trajectory:
        return simulate_path(config, index, disc)

    if workers == 1 or len(indices) <= 1:
        trajectories = [run(i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(run, indices))
    log_perf(f"ensemble of {len(indices)} paths on {workers} worker(s)", started)
    return Ensemble(config, trajectories)


# ---------------------------------------------------------------------------
# Reference solutions for the decoupled, noise-free LLG
# ---------------------------------------------------------------------------

def _llg_rhs(disc: Discretization, alpha: float, k: float, s: Optional[np.ndarray], stray: bool, uniaxial: bool, form: str):
    def rhs(_t, y):
        magnetization = MagnetizationState(y.reshape(-1, 3))
        H = effective_field(magnetization, s, disc, stray=stray, uniaxial=uniaxial)
        return llg_drift(magnetization, H, disc, alpha, k, None, form).reshape(-1)
    return rhs


def reference_llg_solution(
    magnetization: MagnetizationState,
    horizon: float,
    disc: Discretization,
    alpha: float,
    k: float,
    s: Optional[np.ndarray] = None,
    stray: bool = True,
    uniaxial: bool = True,
    form: str = POINTWISE,
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> MagnetizationState:
    """High-order (DOP853) solution of the semi-discrete LLG ODE with frozen spin density."""
    y0 = magnetization.coefficients.reshape(-1)
    sol = solve_ivp(
        _llg_rhs(disc, alpha, k, s, stray, uniaxial, form),
        (0.0, horizon), y0, method="DOP853", rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise NumericalFailure(f"reference integration failed: {sol.message}")
    return MagnetizationState(sol.y[:, -1].reshape(-1, 3))


def euler_llg_solution(
    magnetization: MagnetizationState,
    horizon: float,
    dt: float,
    disc: Discretization,
    alpha: float,
    k: float,
    s: Optional[np.ndarray] = None,
    stray: bool = True,
    uniaxial: bool = True,
    form: str = POINTWISE,
) -> Tuple[MagnetizationState, float]:
    """Forward Euler with the production stepper; returns the final state and accumulated dissipation."""
    steps = int(round(horizon / dt))
    dissipation = 0.0
    for _ in range(steps):
        H = effective_field(magnetization, s, disc, stray=stray, uniaxial=uniaxial)
        result = llg_step(magnetization, H, dt, disc, alpha, k, form=form)
        magnetization = result.magnetization
        dissipation += result.dissipation
    return magnetization, dissipation
