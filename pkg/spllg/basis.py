"""
Laplacian eigenbases on intervals, trapezoid quadrature grids, and the
projection / synthesis maps between coefficient space and grid values.

Dirichlet modes are indexed 1..n, Neumann modes 0..n (the constant mode
e_0 = 1/sqrt(L) sits at index 0, so a Neumann basis with mode count n has
n + 1 functions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidArgument

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# Relative tolerance when matching a grid's endpoints to a basis domain.
DOMAIN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform collocation grid with composite trapezoid weights."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def start(self) -> float:
        return float(self.points[0])

    @property
    def stop(self) -> float:
        return float(self.points[-1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def spacing(self) -> float:
        return (self.stop - self.start) / (self.size - 1)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.tensordot(self.weights, np.asarray(values), axes=(0, 0)).sum())


def uniform_grid(start: float, stop: float, points: int) -> Grid:
    if int(points) != points or points < 2:
        raise InvalidArgument(f"grid needs at least 2 points, got {points}")
    if not stop > start:
        raise InvalidArgument(f"grid interval [{start}, {stop}] is empty")
    points = int(points)
    x = np.linspace(start, stop, points)
    dx = (stop - start) / (points - 1)
    w = np.full(points, dx)
    w[0] = w[-1] = 0.5 * dx
    return Grid(points=x, weights=w)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    kind: str
    mode_count: int
    length: float
    origin: float = 0.0

    @property
    def indices(self) -> np.ndarray:
        if self.kind == DIRICHLET:
            return np.arange(1, self.mode_count + 1)
        return np.arange(0, self.mode_count + 1)

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.indices * math.pi / self.length

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.wavenumbers ** 2

    @property
    def stop(self) -> float:
        return self.origin + self.length

    def evaluate(self, x) -> np.ndarray:
        """Basis functions at ``x``; shape (size, len(x))."""
        phase = np.outer(self.wavenumbers, np.asarray(x, dtype=float) - self.origin)
        if self.kind == DIRICHLET:
            return math.sqrt(2.0 / self.length) * np.sin(phase)
        values = math.sqrt(2.0 / self.length) * np.cos(phase)
        values[0, :] = 1.0 / math.sqrt(self.length)
        return values

    def derivative(self, x) -> np.ndarray:
        """First derivatives of the basis functions at ``x``."""
        k = self.wavenumbers[:, None]
        phase = np.outer(self.wavenumbers, np.asarray(x, dtype=float) - self.origin)
        if self.kind == DIRICHLET:
            return math.sqrt(2.0 / self.length) * k * np.cos(phase)
        return -math.sqrt(2.0 / self.length) * k * np.sin(phase)


def _check_basis_args(n, length) -> None:
    if int(n) != n or n < 1:
        raise InvalidArgument(f"mode count must be a positive integer, got {n}")
    if not (length > 0 and math.isfinite(length)):
        raise InvalidArgument(f"domain length must be positive, got {length}")


def dirichlet_eigenpairs(n: int, length: float, origin: float = 0.0) -> EigenBasis:
    _check_basis_args(n, length)
    return EigenBasis(DIRICHLET, int(n), float(length), float(origin))


def neumann_eigenpairs(n: int, length: float, origin: float = 0.0) -> EigenBasis:
    _check_basis_args(n, length)
    return EigenBasis(NEUMANN, int(n), float(length), float(origin))


class GridBasis:
    """An eigenbasis sampled on a grid, with cached analysis/synthesis matrices."""

    def __init__(self, basis: EigenBasis, grid: Grid):
        tol = DOMAIN_TOL * max(1.0, basis.length)
        if abs(grid.start - basis.origin) > tol or abs(grid.stop - basis.stop) > tol:
            raise InvalidArgument(
                f"grid [{grid.start}, {grid.stop}] does not cover basis domain [{basis.origin}, {basis.stop}]"
            )
        self.basis = basis
        self.grid = grid
        self.values = basis.evaluate(grid.points)
        self.analysis = self.values * grid.weights[None, :]

    @property
    def size(self) -> int:
        return self.basis.size

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.basis.eigenvalues

    def project(self, samples) -> np.ndarray:
        samples = np.asarray(samples)
        if samples.shape[:1] != (self.grid.size,):
            raise InvalidArgument(f"samples have {samples.shape[:1]} points, grid has {self.grid.size}")
        return np.tensordot(self.analysis, samples, axes=(1, 0))

    def synthesize(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        if coeffs.shape[:1] != (self.size,):
            raise InvalidArgument(f"expected {self.size} coefficients, got {coeffs.shape[:1]}")
        return np.tensordot(self.values, coeffs, axes=(0, 0))

    def gram(self) -> np.ndarray:
        return self.analysis @ self.values.T


def project(samples, basis: EigenBasis, grid: Grid) -> np.ndarray:
    return GridBasis(basis, grid).project(samples)


def synthesize(coeffs, basis: EigenBasis, grid: Grid) -> np.ndarray:
    return GridBasis(basis, grid).synthesize(coeffs)


def spectral_laplacian(coeffs, basis: EigenBasis) -> np.ndarray:
    """Coefficients of the Laplacian: mode h scaled by -lambda_h."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[:1] != (basis.size,):
        raise InvalidArgument(f"expected {basis.size} coefficients, got {coeffs.shape[:1]}")
    scale = -basis.eigenvalues.reshape((-1,) + (1,) * (coeffs.ndim - 1))
    return scale * coeffs


def gram_deviation(grid_basis: GridBasis) -> float:
    gram = grid_basis.gram()
    return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


@dataclass(frozen=True)
class DomainGeometry:
    """Schrodinger interval [0, L_K] holding the magnet [a, b] on a shared grid."""

    schrodinger_length: float
    magnet_start: float
    magnet_end: float
    grid_points: int

    def __post_init__(self):
        L, a, b = self.schrodinger_length, self.magnet_start, self.magnet_end
        if not (L > 0 and math.isfinite(L)):
            raise InvalidArgument(f"schrodinger_length must be positive, got {L}")
        if not (0.0 < a < b < L):
            raise InvalidArgument(f"magnet domain [{a}, {b}] must lie strictly inside (0, {L})")
        if int(self.grid_points) != self.grid_points or self.grid_points < 3:
            raise InvalidArgument(f"grid_points must be an integer >= 3, got {self.grid_points}")
        for name, value in (("magnet_start", a), ("magnet_end", b)):
            node = value / self.spacing
            if abs(node - round(node)) > 1e-7:
                raise InvalidArgument(
                    f"{name}={value} is not a grid node (spacing {self.spacing:.6g}); adjust grid_points"
                )

    @property
    def spacing(self) -> float:
        return self.schrodinger_length / (self.grid_points - 1)

    @property
    def magnet_length(self) -> float:
        return self.magnet_end - self.magnet_start

    @property
    def magnet_nodes(self) -> slice:
        first = int(round(self.magnet_start / self.spacing))
        last = int(round(self.magnet_end / self.spacing))
        return slice(first, last + 1)

    @property
    def magnet_points(self) -> int:
        nodes = self.magnet_nodes
        return nodes.stop - nodes.start

    def check_modes(self, *mode_counts: int) -> Optional[str]:
        """Return a message when the anti-aliasing margins fail, else None."""
        largest = max(mode_counts)
        if self.grid_points < 4 * largest:
            return f"grid_points={self.grid_points} < 4 x largest mode count {largest}"
        return None
