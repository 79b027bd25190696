"""
Precomputed grids, bases and noise coefficients for one configuration.

The magnet grid is the run of Schrodinger grid nodes between a and b, so a
field on the magnet embeds into the Schrodinger grid without interpolation.
Integrals over K of fields supported on D use the Schrodinger trapezoid
weights times an indicator that is 1/2 at the two magnet end nodes; this makes
them equal to the magnet-grid trapezoid rule exactly.
"""

from __future__ import annotations

import numpy as np

from .basis import GridBasis, dirichlet_eigenpairs, neumann_eigenpairs, uniform_grid
from .config import SimulationConfig
from .noise import NoiseSpec, build_noise_spec


class Discretization:
    def __init__(self, config: SimulationConfig):
        geometry = config.geometry
        self.config = config
        self.geometry = geometry
        self.grid = uniform_grid(0.0, geometry.schrodinger_length, geometry.grid_points)
        self.magnet_nodes = geometry.magnet_nodes
        self.magnet_grid = uniform_grid(geometry.magnet_start, geometry.magnet_end, geometry.magnet_points)

        indicator = np.zeros(self.grid.size)
        indicator[self.magnet_nodes] = 1.0
        indicator[self.magnet_nodes.start] = 0.5
        indicator[self.magnet_nodes.stop - 1] = 0.5
        self.indicator = indicator

        L = geometry.schrodinger_length
        self.schrodinger = GridBasis(dirichlet_eigenpairs(config.n_modes_schrodinger, L), self.grid)
        self.potential = GridBasis(dirichlet_eigenpairs(config.n_modes_potential, L), self.grid)
        self.potential_derivative = self.potential.basis.derivative(self.grid.points)
        self.magnet = GridBasis(
            neumann_eigenpairs(config.n_modes_magnet, geometry.magnet_length, origin=geometry.magnet_start),
            self.magnet_grid,
        )
        self.noise: NoiseSpec = build_noise_spec(
            self.magnet_grid.points,
            self.magnet_grid.weights,
            family=config.noise_family,
            amplitudes=config.noise_amplitudes,
            shape=config.noise_shape,
            vectors=config.noise_vectors,
            jump_intensity=config.jump_intensity,
            jump_mark_radius=config.jump_mark_radius,
            jump_amplitude=config.jump_amplitude,
            jump_direction=_unit(config.jump_direction),
            jump_mark_directions=config.jump_mark_directions,
            jump_profile=config.jump_profile,
        )

    @property
    def magnet_weights(self) -> np.ndarray:
        return self.magnet_grid.weights

    def embed(self, field: np.ndarray) -> np.ndarray:
        """Extend a magnet-grid field by zero to the Schrodinger grid."""
        out = np.zeros((self.grid.size,) + field.shape[1:], dtype=field.dtype)
        out[self.magnet_nodes] = field
        return out

    def restrict(self, field: np.ndarray) -> np.ndarray:
        return field[self.magnet_nodes]

    def magnet_integral(self, values: np.ndarray) -> float:
        """Trapezoid integral over D of a scalar magnet-grid function."""
        return float(self.magnet_weights @ values)


def _unit(vector):
    if vector is None:
        return None
    arr = np.asarray(vector, dtype=float)
    return arr / np.linalg.norm(arr)
