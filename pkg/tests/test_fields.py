import math

import numpy as np
import pytest

from spllg.basis import GridBasis, dirichlet_eigenpairs, spectral_laplacian, uniform_grid
from spllg.errors import InvalidArgument
from spllg.fields import (
    MagnetizationState,
    SpinorState,
    anisotropy,
    coulomb_potential,
    density,
    effective_field,
    gilbert_inverse,
    poisson_coefficients,
    printed_gilbert_inverse,
    skew,
    spin_density,
    stray_energy,
    stray_field,
    stray_field_full,
)


def unit_spinor(n, spin):
    coeffs = np.zeros((1, n, 2), dtype=complex)
    coeffs[0, 0] = spin
    return SpinorState(coeffs, np.ones(1))


def random_spinor(J, n, seed):
    rng = np.random.default_rng(seed)
    coeffs = rng.normal(size=(J, n, 2)) + 1j * rng.normal(size=(J, n, 2))
    return SpinorState(coeffs, rng.uniform(0.1, 1.0, size=J))


def test_density_of_single_mode(small_disc):
    sb = small_disc.schrodinger
    spinor = unit_spinor(sb.size, [1.0, 0.0])
    assert np.allclose(density(spinor, sb), sb.values[0] ** 2)
    zero = SpinorState(np.zeros((2, sb.size, 2), dtype=complex), np.ones(2))
    assert np.all(density(zero, sb) == 0.0)
    assert np.all(spin_density(zero, sb) == 0.0)


def test_density_integrates_to_parseval_mass(small_disc):
    spinor = random_spinor(3, small_disc.schrodinger.size, 1)
    total = small_disc.grid.integrate(density(spinor, small_disc.schrodinger))
    assert total == pytest.approx(float(spinor.weights @ spinor.masses()), rel=1e-10)


def test_spin_density_by_hand(small_disc):
    sb = small_disc.schrodinger
    theta_sq = sb.values[0] ** 2
    up = spin_density(unit_spinor(sb.size, [1.0, 0.0]), sb)
    assert np.allclose(up, np.stack([0 * theta_sq, 0 * theta_sq, theta_sq], axis=1))
    tilted = spin_density(unit_spinor(sb.size, np.array([1.0, 1.0]) / math.sqrt(2)), sb)
    assert np.allclose(tilted, np.stack([theta_sq, 0 * theta_sq, 0 * theta_sq], axis=1))


def test_spin_bound_and_single_spinor_equality(small_disc):
    sb = small_disc.schrodinger
    many = random_spinor(3, sb.size, 2)
    assert np.max(np.linalg.norm(spin_density(many, sb), axis=1) - density(many, sb)) <= 1e-12
    one = random_spinor(1, sb.size, 3)
    assert np.allclose(np.linalg.norm(spin_density(one, sb), axis=1), density(one, sb), atol=1e-12)


def test_densities_are_quadratic(small_disc):
    sb = small_disc.schrodinger
    spinor = random_spinor(2, sb.size, 4)
    doubled = spinor.with_coefficients(2.0 * spinor.coefficients)
    assert np.allclose(density(doubled, sb), 4.0 * density(spinor, sb))
    assert np.allclose(spin_density(doubled, sb), 4.0 * spin_density(spinor, sb))


@pytest.fixture
def pi_basis():
    return GridBasis(dirichlet_eigenpairs(6, math.pi), uniform_grid(0.0, math.pi, 97))


def test_coulomb_potential_of_sines(pi_basis):
    x = pi_basis.grid.points
    assert np.allclose(coulomb_potential(np.sin(x), pi_basis), np.sin(x), atol=1e-12)
    assert np.allclose(coulomb_potential(np.sin(2 * x), pi_basis), np.sin(2 * x) / 4, atol=1e-12)


def test_coulomb_potential_solves_poisson(pi_basis):
    x = pi_basis.grid.points
    rho = np.sin(x) + 0.5 * np.sin(3 * x)
    v = poisson_coefficients(rho, pi_basis)
    assert np.allclose(-spectral_laplacian(v, pi_basis.basis), pi_basis.project(rho), atol=1e-12)
    V = pi_basis.synthesize(v)
    assert abs(V[0]) < 1e-12 and abs(V[-1]) < 1e-12
    h = pi_basis.grid.spacing
    fd = -(V[2:] - 2 * V[1:-1] + V[:-2]) / (h * h)
    assert np.linalg.norm(fd - rho[1:-1]) / np.linalg.norm(rho[1:-1]) <= 1e-3


def test_coulomb_potential_is_linear(small_disc):
    rng = np.random.default_rng(5)
    r1, r2 = rng.uniform(size=small_disc.grid.size), rng.uniform(size=small_disc.grid.size)
    lhs = coulomb_potential(r1 + 3 * r2, small_disc.potential)
    rhs = coulomb_potential(r1, small_disc.potential) + 3 * coulomb_potential(r2, small_disc.potential)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_stray_field_vanishes_for_zero_magnetization(small_disc):
    assert np.all(stray_field(np.zeros((small_disc.magnet_grid.size, 3)), small_disc) == 0.0)


def test_stray_field_only_sees_first_component(small_disc):
    rng = np.random.default_rng(6)
    m = rng.normal(size=(small_disc.magnet_grid.size, 3))
    tangential = m.copy()
    tangential[:, 0] = 0.0
    assert np.all(stray_field(tangential, small_disc) == 0.0)
    H = stray_field_full(m, small_disc)
    assert np.all(H[:, 1:] == 0.0)
    assert np.allclose(stray_field(2.0 * m, small_disc), 2.0 * stray_field(m, small_disc))


def test_stray_energy_identity(small_disc):
    rng = np.random.default_rng(7)
    m = rng.normal(size=(small_disc.magnet_grid.size, 3))
    H = stray_field(m, small_disc)
    lhs = -small_disc.magnet_integral(np.sum(m * H, axis=1))
    assert lhs == pytest.approx(stray_energy(m, small_disc), rel=1e-10)
    assert stray_energy(m, small_disc) >= 0.0


def test_anisotropy_values():
    w, grad = anisotropy(np.array([[1.0, 0.0, 0.0]]))
    assert w[0] == 0.0 and np.all(grad == 0.0)
    w, grad = anisotropy(np.array([[0.0, 1.0, 1.0]]))
    assert w[0] == 2.0
    assert np.array_equal(grad[0], [0.0, 2.0, 2.0])


def test_anisotropy_gradient_matches_central_difference():
    m = np.array([0.3, -0.7, 0.4])
    eps = 1e-5
    _, grad = anisotropy(m[None, :])
    for c in range(3):
        step = np.zeros(3)
        step[c] = eps
        fd = (anisotropy((m + step)[None, :])[0][0] - anisotropy((m - step)[None, :])[0][0]) / (2 * eps)
        assert fd == pytest.approx(grad[0, c], abs=1e-8)


def test_effective_field_of_constant_mode(small_disc):
    beta = np.zeros((small_disc.magnet.size, 3))
    beta[0] = [0.3, 0.4, 0.5]
    magnetization = MagnetizationState(beta)
    m = small_disc.magnet.synthesize(beta)
    H = effective_field(magnetization, None, small_disc, stray=False, uniaxial=True)
    assert np.allclose(H, -anisotropy(m)[1], atol=1e-12)


def test_effective_field_of_zero_magnetization_is_half_spin(small_disc):
    rng = np.random.default_rng(8)
    s = rng.normal(size=(small_disc.magnet_grid.size, 3))
    H = effective_field(MagnetizationState(np.zeros((small_disc.magnet.size, 3))), s, small_disc)
    assert np.allclose(H, 0.5 * s)


def test_effective_field_recomposes(small_disc):
    rng = np.random.default_rng(9)
    beta = rng.normal(size=(small_disc.magnet.size, 3))
    s = rng.normal(size=(small_disc.magnet_grid.size, 3))
    magnet = small_disc.magnet
    m = magnet.synthesize(beta)
    expected = (
        magnet.synthesize(spectral_laplacian(beta, magnet.basis))
        - anisotropy(m)[1]
        + stray_field(m, small_disc)
        + 0.5 * s
    )
    assert np.allclose(effective_field(MagnetizationState(beta), s, small_disc), expected, atol=1e-10)


def test_gilbert_inverse_examples():
    assert np.allclose(gilbert_inverse([0.0, 0.0, 0.0], 2.0), 0.5 * np.eye(3))
    expected = 0.5 * np.array([[1, 1, 0], [-1, 1, 0], [0, 0, 2]])
    assert np.allclose(gilbert_inverse([0.0, 0.0, 1.0], 1.0), expected)


def test_gilbert_inverse_random_samples():
    rng = np.random.default_rng(10)
    m = rng.normal(size=(1000, 3)) * rng.uniform(0.0, 3.0, size=(1000, 1))
    alpha = rng.uniform(0.1, 2.0, size=1000)
    for vec, a in zip(m, alpha):
        inv = gilbert_inverse(vec, a)
        assert np.max(np.abs((a * np.eye(3) + skew(vec)) @ inv - np.eye(3))) <= 1e-12
        assert np.max(np.sum(np.abs(inv), axis=1)) <= 2.0 / a + 1e-12


def test_gilbert_inverse_broadcasts_over_points():
    rng = np.random.default_rng(11)
    m = rng.normal(size=(5, 3))
    stacked = gilbert_inverse(m, 0.7)
    assert stacked.shape == (5, 3, 3)
    assert np.allclose(stacked[3], gilbert_inverse(m[3], 0.7))


def test_printed_variant_inverts_the_wrong_operator():
    m, alpha = np.array([0.2, -0.5, 0.9]), 0.8
    wrong = printed_gilbert_inverse(m, alpha)
    assert np.max(np.abs((alpha * np.eye(3) + skew(m)) @ wrong - np.eye(3))) > 1e-3
    assert np.allclose((alpha * np.eye(3) - skew(m)) @ wrong, np.eye(3))


@pytest.mark.parametrize("alpha", [0.0, -1.0])
def test_gilbert_inverse_rejects_nonpositive_alpha(alpha):
    with pytest.raises(InvalidArgument):
        gilbert_inverse([0.0, 0.0, 1.0], alpha)


def test_spinor_state_validation():
    with pytest.raises(InvalidArgument):
        SpinorState(np.zeros((2, 3), dtype=complex), np.ones(2))
    with pytest.raises(InvalidArgument):
        SpinorState(np.zeros((2, 3, 2), dtype=complex), np.array([1.0, -1.0]))
    with pytest.raises(InvalidArgument):
        MagnetizationState(np.zeros((4, 2)))
