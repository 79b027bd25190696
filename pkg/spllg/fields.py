"""
Derived fields of the coupled system.

Everything here is a pure function of coefficient arrays and grid values:
densities of the spinor ensemble, the Coulomb potential, the 1D stray field,
uniaxial anisotropy, the effective field and the Gilbert inverse.

Grid vector fields carry the component axis last, shape (P, 3).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from .basis import GridBasis
from .errors import InvalidArgument

if TYPE_CHECKING:
    from .discretization import Discretization


# sigma_2 = [[0, -i], [i, 0]]
PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


@dataclass(frozen=True, eq=False)
class SpinorState:
    """Galerkin coefficients alpha[j, h, s] of J spinor wavefunctions and their occupations."""

    coefficients: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        coeffs = self.coefficients
        if coeffs.ndim != 3 or coeffs.shape[2] != 2:
            raise InvalidArgument(f"spinor coefficients must be (J, n, 2), got {coeffs.shape}")
        if self.weights.shape != (coeffs.shape[0],):
            raise InvalidArgument(f"expected {coeffs.shape[0]} occupation weights, got {self.weights.shape}")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise InvalidArgument("occupation weights must be finite and nonnegative")

    @property
    def count(self) -> int:
        return int(self.coefficients.shape[0])

    @property
    def mode_count(self) -> int:
        return int(self.coefficients.shape[1])

    def masses(self) -> np.ndarray:
        return np.sum(np.abs(self.coefficients) ** 2, axis=(1, 2))

    def with_coefficients(self, coefficients: np.ndarray) -> "SpinorState":
        return SpinorState(coefficients, self.weights)


@dataclass(frozen=True, eq=False)
class MagnetizationState:
    """Neumann coefficients beta[h, c] of the magnetization."""

    coefficients: np.ndarray

    def __post_init__(self):
        if self.coefficients.ndim != 2 or self.coefficients.shape[1] != 3:
            raise InvalidArgument(f"magnetization coefficients must be (n, 3), got {self.coefficients.shape}")

    def h1_seminorm_sq(self, eigenvalues: np.ndarray) -> float:
        return float(np.sum(eigenvalues[:, None] * self.coefficients ** 2))


def wavefunctions(spinor: SpinorState, grid_basis: GridBasis) -> np.ndarray:
    """psi_j(x) for every j: shape (J, P, 2)."""
    return np.einsum("jhs,hp->jps", spinor.coefficients, grid_basis.values)


def density(spinor: SpinorState, grid_basis: GridBasis) -> np.ndarray:
    psi = wavefunctions(spinor, grid_basis)
    return np.einsum("j,jp->p", spinor.weights, np.sum(np.abs(psi) ** 2, axis=2))


def spin_density(spinor: SpinorState, grid_basis: GridBasis) -> np.ndarray:
    """s_a(x) = sum_j lambda_j psi_j^dagger sigma_a psi_j, shape (P, 3)."""
    psi = wavefunctions(spinor, grid_basis)
    s = np.einsum("j,jps,ast,jpt->pa", spinor.weights, psi.conj(), PAULI, psi)
    return s.real


def poisson_coefficients(rho: np.ndarray, grid_basis: GridBasis) -> np.ndarray:
    """Dirichlet coefficients of V with -V'' = rho."""
    return grid_basis.project(rho) / grid_basis.eigenvalues


def coulomb_potential(rho: np.ndarray, grid_basis: GridBasis) -> np.ndarray:
    return grid_basis.synthesize(poisson_coefficients(rho, grid_basis))


def stray_coefficients(m: np.ndarray, disc: "Discretization") -> np.ndarray:
    """Dirichlet coefficients u_h of u with u'' = (m_1 chi_D)'."""
    source = np.zeros(disc.grid.size)
    source[disc.magnet_nodes] = m[:, 0]
    weighted = disc.grid.weights * disc.indicator * source
    return (disc.potential_derivative @ weighted) / disc.potential.eigenvalues


def stray_field_full(m: np.ndarray, disc: "Discretization") -> np.ndarray:
    """H_s = (-u', 0, 0) on the whole Schrodinger grid."""
    field = np.zeros((disc.grid.size, 3))
    field[:, 0] = -(stray_coefficients(m, disc) @ disc.potential_derivative)
    return field


def stray_field(m: np.ndarray, disc: "Discretization") -> np.ndarray:
    """H_s restricted to the magnet grid."""
    return stray_field_full(m, disc)[disc.magnet_nodes]


def stray_energy(m: np.ndarray, disc: "Discretization") -> float:
    """int_K |H_s|^2 by Parseval over the cosine derivatives of the Dirichlet modes."""
    u = stray_coefficients(m, disc)
    return float(np.sum(disc.potential.eigenvalues * u * u))


def anisotropy(m: np.ndarray):
    """Uniaxial anisotropy with easy axis e_1: w = m_2^2 + m_3^2 and w'(m)."""
    w = m[..., 1] ** 2 + m[..., 2] ** 2
    grad = np.zeros_like(m)
    grad[..., 1:] = 2.0 * m[..., 1:]
    return w, grad


def effective_field(
    magnetization: MagnetizationState,
    s: Optional[np.ndarray],
    disc: "Discretization",
    stray: bool = True,
    uniaxial: bool = True,
    m: Optional[np.ndarray] = None,
) -> np.ndarray:
    """H = Laplacian(m) - w'(m) + H_s + s/2 on the magnet grid."""
    magnet = disc.magnet
    if m is None:
        m = magnet.synthesize(magnetization.coefficients)
    field = magnet.synthesize(-magnet.eigenvalues[:, None] * magnetization.coefficients)
    if uniaxial:
        field = field - anisotropy(m)[1]
    if stray:
        field = field + stray_field(m, disc)
    if s is not None:
        field = field + 0.5 * s
    return field


def skew(m: np.ndarray) -> np.ndarray:
    """[m]_x with [m]_x v = m x v; broadcasts over leading axes."""
    m = np.asarray(m, dtype=float)
    out = np.zeros(m.shape[:-1] + (3, 3))
    out[..., 0, 1] = -m[..., 2]
    out[..., 0, 2] = m[..., 1]
    out[..., 1, 0] = m[..., 2]
    out[..., 1, 2] = -m[..., 0]
    out[..., 2, 0] = -m[..., 1]
    out[..., 2, 1] = m[..., 0]
    return out


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")


def gilbert_inverse(m, alpha: float) -> np.ndarray:
    """(alpha I + [m]_x)^-1 = (alpha^2 I - alpha [m]_x + m m^T) / (alpha (alpha^2 + |m|^2))."""
    _check_alpha(alpha)
    m = np.asarray(m, dtype=float)
    norm_sq = np.sum(m * m, axis=-1)
    numerator = alpha * alpha * np.eye(3) - alpha * skew(m) + m[..., :, None] * m[..., None, :]
    return numerator / (alpha * (alpha * alpha + norm_sq))[..., None, None]


def printed_gilbert_inverse(m, alpha: float) -> np.ndarray:
    """The alpha-transposed variant, which inverts (alpha I - [m]_x) instead.

    Only used to exercise the verification suite's fault detection.
    """
    _check_alpha(alpha)
    m = np.asarray(m, dtype=float)
    norm_sq = np.sum(m * m, axis=-1)
    numerator = alpha * alpha * np.eye(3) + alpha * skew(m) + m[..., :, None] * m[..., None, :]
    return numerator / (alpha * (alpha * alpha + norm_sq))[..., None, None]
