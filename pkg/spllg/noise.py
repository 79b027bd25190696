"""
Wiener and compensated small-jump noise: sampling and coefficient operators.

Two coefficient families are provided:

* ``linear``   G_i(m) = c_i phi_i m      (Stratonovich correction 1/2 sum c_i^2 phi_i^2 m)
* ``additive`` G_i(m) = c_i phi_i v_i    (no correction)

The jump coefficient is F(m, l) = c_F <l, e> zeta m with marks l on the sphere
of radius r < 1, drawn uniformly from a finite set of configured directions.
The jump measure has finite intensity lambda_P, so paths are simulated exactly.

Random streams are numpy PCG64 generators seeded from
``SeedSequence(seed, spawn_key=(path_index,))``; each path spawns one child
stream for Wiener increments and one for jumps, so turning jumps on or off
never shifts the Wiener draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgument

LINEAR = "linear"
ADDITIVE = "additive"
FAMILIES = (LINEAR, ADDITIVE)

SHAPES = ("constant", "cosine")


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    wiener_dim: int
    family: str
    amplitudes: np.ndarray
    shapes: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    jump_intensity: float = 0.0
    jump_mark_radius: float = 0.5
    jump_amplitude: float = 0.0
    jump_direction: Optional[np.ndarray] = None
    jump_mark_directions: Optional[np.ndarray] = None
    jump_profile: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.wiener_dim
        if int(n) != n or n < 1:
            raise InvalidArgument(f"wiener_dim must be a positive integer, got {n}")
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown noise family {self.family!r}")
        if self.amplitudes.shape != (n,):
            raise InvalidArgument(f"expected {n} amplitudes, got {self.amplitudes.shape}")
        if self.shapes.shape[0] != n or self.shapes.shape[1] != self.weights.shape[0]:
            raise InvalidArgument("shape functions must be (wiener_dim, magnet grid points)")
        if self.vectors.shape != (n, 3):
            raise InvalidArgument(f"noise vectors must be ({n}, 3), got {self.vectors.shape}")
        if self.jump_intensity < 0 or not math.isfinite(self.jump_intensity):
            raise InvalidArgument(f"jump_intensity must be >= 0, got {self.jump_intensity}")
        if not 0.0 < self.jump_mark_radius < 1.0:
            raise InvalidArgument(f"jump_mark_radius must lie in (0, 1), got {self.jump_mark_radius}")
        if self.jump_direction is None or self.jump_direction.shape != (n,):
            raise InvalidArgument(f"jump_direction must have {n} components")
        if abs(np.linalg.norm(self.jump_direction) - 1.0) > 1e-9:
            raise InvalidArgument("jump_direction must be a unit vector")
        dirs = self.jump_mark_directions
        if dirs is None or dirs.ndim != 2 or dirs.shape[1] != n or dirs.shape[0] < 1:
            raise InvalidArgument(f"jump_mark_directions must be a non-empty list of {n}-vectors")
        if np.max(np.abs(np.linalg.norm(dirs, axis=1) - 1.0)) > 1e-9:
            raise InvalidArgument("jump_mark_directions must be unit vectors")
        if self.jump_profile is None or self.jump_profile.shape != self.weights.shape:
            raise InvalidArgument("jump_profile must be sampled on the magnet grid")

    @property
    def has_jumps(self) -> bool:
        return self.jump_intensity > 0.0 and self.jump_amplitude != 0.0

    @property
    def mean_mark(self) -> np.ndarray:
        return self.jump_mark_radius * self.jump_mark_directions.mean(axis=0)

    @property
    def compensator_rate(self) -> np.ndarray:
        return self.jump_intensity * self.mean_mark


def _unit_rows(rows) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(rows, dtype=float))
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0):
        raise InvalidArgument("direction vectors must be nonzero")
    return arr / norms[:, None]


def build_noise_spec(
    magnet_points: np.ndarray,
    magnet_weights: np.ndarray,
    family: str = LINEAR,
    amplitudes: Sequence[float] = (0.2,),
    shape: str = "constant",
    vectors: Optional[Sequence[Sequence[float]]] = None,
    jump_intensity: float = 0.0,
    jump_mark_radius: float = 0.5,
    jump_amplitude: float = 0.0,
    jump_direction: Optional[Sequence[float]] = None,
    jump_mark_directions: Optional[Sequence[Sequence[float]]] = None,
    jump_profile: str = "constant",
) -> NoiseSpec:
    """Assemble a NoiseSpec with grid functions sampled on the magnet grid."""
    x = np.asarray(magnet_points, dtype=float)
    xi = (x - x[0]) / (x[-1] - x[0])
    amps = np.asarray(amplitudes, dtype=float)
    n = int(amps.shape[0])
    if shape not in SHAPES:
        raise InvalidArgument(f"unknown noise shape {shape!r}")
    if shape == "constant":
        shapes = np.ones((n, x.size))
    else:
        shapes = np.cos(np.outer(np.arange(n), math.pi * xi))
    if vectors is None:
        vecs = np.eye(3)[np.arange(n) % 3]
    else:
        vecs = np.asarray(vectors, dtype=float).reshape(-1, 3) if len(vectors) else np.zeros((0, 3))
    if jump_direction is None:
        jump_direction = np.eye(n)[0]
    direction = np.asarray(jump_direction, dtype=float)
    if jump_mark_directions is None:
        marks = np.vstack([direction, -direction])
    else:
        marks = _unit_rows(jump_mark_directions)
    if jump_profile not in SHAPES:
        raise InvalidArgument(f"unknown jump profile {jump_profile!r}")
    zeta = np.ones(x.size) if jump_profile == "constant" else np.cos(math.pi * xi)
    return NoiseSpec(
        wiener_dim=n,
        family=family,
        amplitudes=amps,
        shapes=shapes,
        vectors=vecs,
        weights=np.asarray(magnet_weights, dtype=float),
        jump_intensity=float(jump_intensity),
        jump_mark_radius=float(jump_mark_radius),
        jump_amplitude=float(jump_amplitude),
        jump_direction=direction,
        jump_mark_directions=marks,
        jump_profile=zeta,
    )


# ---------------------------------------------------------------------------
# Random streams and sampling
# ---------------------------------------------------------------------------

def path_streams(seed: int, path_index: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """(wiener, jump) generators for one path."""
    root = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index),))
    wiener_seq, jump_seq = root.spawn(2)
    return np.random.Generator(np.random.PCG64(wiener_seq)), np.random.Generator(np.random.PCG64(jump_seq))


def wiener_increments(spec: NoiseSpec, dt: float, count: int, stream: np.random.Generator) -> np.ndarray:
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt}")
    if count < 0:
        raise InvalidArgument(f"increment count must be >= 0, got {count}")
    return stream.standard_normal((int(count), spec.wiener_dim)) * math.sqrt(dt)


@dataclass(frozen=True, eq=False)
class JumpEvents:
    times: np.ndarray
    marks: np.ndarray
    compensator: np.ndarray

    @property
    def count(self) -> int:
        return int(self.times.shape[0])


def sample_jumps(spec: NoiseSpec, horizon: float, stream: np.random.Generator) -> JumpEvents:
    if horizon < 0:
        raise InvalidArgument(f"horizon must be >= 0, got {horizon}")
    if not spec.jump_mark_radius < 1.0:
        raise InvalidArgument("jump marks must stay inside the unit ball")
    n = spec.wiener_dim
    if spec.jump_intensity == 0.0 or horizon == 0.0:
        return JumpEvents(np.zeros(0), np.zeros((0, n)), np.zeros(n))
    count = int(stream.poisson(spec.jump_intensity * horizon))
    times = np.sort(stream.uniform(0.0, horizon, size=count))
    for i in range(1, count):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    picks = stream.integers(0, spec.jump_mark_directions.shape[0], size=count)
    marks = spec.jump_mark_radius * spec.jump_mark_directions[picks]
    return JumpEvents(times, marks, spec.compensator_rate.copy())


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """One path's noise, resolved onto sub-steps of length ``substep``."""

    increments: np.ndarray
    jumps: JumpEvents
    substep: float
    event_substeps: np.ndarray

    @property
    def compensator(self) -> np.ndarray:
        return self.jumps.compensator

    def increment(self, index: int) -> np.ndarray:
        return self.increments[index]

    def marks_in(self, index: int) -> np.ndarray:
        lo = np.searchsorted(self.event_substeps, index, side="left")
        hi = np.searchsorted(self.event_substeps, index, side="right")
        return self.jumps.marks[lo:hi]


def sample_realization(
    spec: NoiseSpec, dt: float, steps: int, seed: int, path_index: int, per_step: int = 2
) -> NoiseRealization:
    substep = dt / per_step
    substeps = steps * per_step
    wiener_rng, jump_rng = path_streams(seed, path_index)
    increments = wiener_increments(spec, substep, substeps, wiener_rng)
    jumps = sample_jumps(spec, steps * dt, jump_rng)
    owner = np.minimum((jumps.times / substep).astype(np.int64), max(substeps - 1, 0))
    return NoiseRealization(increments, jumps, substep, owner)


# ---------------------------------------------------------------------------
# Coefficient operators (m sampled on the magnet grid, shape (P_D, 3))
# ---------------------------------------------------------------------------

def g_eval(spec: NoiseSpec, m: np.ndarray, i: int) -> np.ndarray:
    """G_i(m) for channel ``i`` (0-based)."""
    if not 0 <= i < spec.wiener_dim:
        raise InvalidArgument(f"channel {i} outside 0..{spec.wiener_dim - 1}")
    scale = spec.amplitudes[i] * spec.shapes[i]
    if spec.family == LINEAR:
        return scale[:, None] * m
    return np.outer(scale, spec.vectors[i])


def stratonovich_correction(spec: NoiseSpec, m: np.ndarray) -> np.ndarray:
    """1/2 sum_i G_i'(m)[G_i(m)]."""
    if spec.family == ADDITIVE:
        return np.zeros_like(m)
    weight = 0.5 * np.einsum("i,ip->p", spec.amplitudes ** 2, spec.shapes ** 2)
    return weight[:, None] * m


def f_eval(spec: NoiseSpec, m: np.ndarray, mark) -> np.ndarray:
    mark = np.asarray(mark, dtype=float)
    if mark.shape != (spec.wiener_dim,):
        raise InvalidArgument(f"mark must have {spec.wiener_dim} components")
    if not np.linalg.norm(mark) < 1.0:
        raise InvalidArgument("mark lies outside the open unit ball (large jumps are excluded)")
    scale = spec.jump_amplitude * float(mark @ spec.jump_direction)
    return (scale * spec.jump_profile)[:, None] * m


def compensator_field(spec: NoiseSpec, m: np.ndarray) -> np.ndarray:
    """int_B F(m, l) mu(dl): the drift removed by compensation."""
    return spec.jump_intensity * f_eval(spec, m, spec.mean_mark)


def l2_norm_sq(spec: NoiseSpec, field: np.ndarray) -> float:
    return float(spec.weights @ np.sum(field * field, axis=-1))


def jump_second_moment(spec: NoiseSpec, m: np.ndarray) -> float:
    """int_B |F(m, l)|^2 mu(dl)."""
    if spec.jump_intensity == 0.0:
        return 0.0
    r = spec.jump_mark_radius
    total = sum(l2_norm_sq(spec, f_eval(spec, m, r * u)) for u in spec.jump_mark_directions)
    return spec.jump_intensity * total / spec.jump_mark_directions.shape[0]


def growth_constants(spec: NoiseSpec) -> Tuple[float, float]:
    """(K_1, K_2) for the Lipschitz and linear-growth bounds of G, G'G and F.

    With pointwise-diagonal coefficients the worst case concentrates on the
    node where the profile peaks, so the jump term is evaluated there.
    """
    peak = np.zeros((spec.weights.shape[0], 3))
    node = int(np.argmax(np.abs(spec.jump_profile) * (spec.weights > 0)))
    peak[node, 0] = 1.0
    jump = jump_second_moment(spec, peak) / l2_norm_sq(spec, peak)
    if spec.family == LINEAR:
        scales = np.abs(spec.amplitudes) * np.max(np.abs(spec.shapes), axis=1)
        k1 = float(np.sum(scales)) ** 2 + float(np.sum(scales ** 2)) ** 2 + jump
        return k1, k1
    additive = sum(
        abs(spec.amplitudes[i]) * math.sqrt(float(spec.weights @ spec.shapes[i] ** 2)) * float(np.linalg.norm(spec.vectors[i]))
        for i in range(spec.wiener_dim)
    )
    return jump, max(additive ** 2, jump)
