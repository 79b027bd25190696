import math

import numpy as np
import pytest

from spllg.basis import (
    DomainGeometry,
    GridBasis,
    dirichlet_eigenpairs,
    gram_deviation,
    neumann_eigenpairs,
    project,
    spectral_laplacian,
    synthesize,
    uniform_grid,
)
from spllg.errors import InvalidArgument


def test_dirichlet_closed_form():
    basis = dirichlet_eigenpairs(1, math.pi)
    assert basis.eigenvalues[0] == pytest.approx(1.0)
    assert basis.evaluate([math.pi / 2])[0, 0] == pytest.approx(math.sqrt(2 / math.pi))
    assert dirichlet_eigenpairs(3, 1.0).eigenvalues[-1] == pytest.approx(9 * math.pi ** 2)


def test_dirichlet_modes_vanish_at_endpoints():
    values = dirichlet_eigenpairs(5, 2.0).evaluate([0.0, 2.0])
    assert np.max(np.abs(values)) < 1e-12


def test_neumann_constant_mode_and_eigenvalues():
    basis = neumann_eigenpairs(1, 1.0)
    assert basis.size == 2
    assert basis.eigenvalues[0] == 0.0
    assert np.allclose(basis.evaluate(np.linspace(0, 1, 5))[0], 1.0)
    assert neumann_eigenpairs(2, 2.0).eigenvalues[2] == pytest.approx(math.pi ** 2)


def test_neumann_derivative_vanishes_at_endpoints():
    basis = neumann_eigenpairs(8, 2.0, origin=1.0)
    assert np.max(np.abs(basis.derivative([1.0, 3.0]))) < 1e-10


@pytest.mark.parametrize("builder", [dirichlet_eigenpairs, neumann_eigenpairs])
@pytest.mark.parametrize("n,length", [(0, 1.0), (3, 0.0), (2.5, 1.0), (3, -1.0)])
def test_invalid_basis_arguments(builder, n, length):
    with pytest.raises(InvalidArgument):
        builder(n, length)


def test_gram_matrix_is_identity():
    dirichlet = GridBasis(dirichlet_eigenpairs(16, 4.0), uniform_grid(0.0, 4.0, 257))
    neumann = GridBasis(neumann_eigenpairs(8, 2.0, origin=1.0), uniform_grid(1.0, 3.0, 129))
    assert gram_deviation(dirichlet) <= 1e-12
    assert gram_deviation(neumann) <= 1e-12


def test_project_single_mode_and_zero():
    gb = GridBasis(dirichlet_eigenpairs(6, 4.0), uniform_grid(0.0, 4.0, 65))
    coeffs = gb.project(gb.values[1])
    expected = np.zeros(6)
    expected[1] = 1.0
    assert np.allclose(coeffs, expected, atol=1e-12)
    assert np.all(gb.project(np.zeros(65)) == 0.0)


def test_project_synthesize_round_trip():
    rng = np.random.default_rng(3)
    grid = uniform_grid(1.0, 3.0, 129)
    basis = neumann_eigenpairs(8, 2.0, origin=1.0)
    c = rng.normal(size=(basis.size, 3))
    assert np.allclose(project(synthesize(c, basis, grid), basis, grid), c, atol=1e-10)


def test_synthesize_constant_mode_and_linearity():
    gb = GridBasis(neumann_eigenpairs(4, 2.0), uniform_grid(0.0, 2.0, 33))
    e0 = np.zeros(gb.size)
    e0[0] = 1.0
    assert np.allclose(gb.synthesize(e0), 1 / math.sqrt(2.0))
    rng = np.random.default_rng(4)
    c1, c2 = rng.normal(size=gb.size), rng.normal(size=gb.size)
    combined = gb.synthesize(2.0 * c1 - 3.0 * c2)
    assert np.allclose(combined, 2.0 * gb.synthesize(c1) - 3.0 * gb.synthesize(c2), atol=1e-13)


def test_grid_basis_rejects_mismatched_inputs():
    with pytest.raises(InvalidArgument):
        GridBasis(dirichlet_eigenpairs(4, 4.0), uniform_grid(0.0, 3.0, 65))
    gb = GridBasis(dirichlet_eigenpairs(4, 4.0), uniform_grid(0.0, 4.0, 65))
    with pytest.raises(InvalidArgument):
        gb.synthesize(np.zeros(3))
    with pytest.raises(InvalidArgument):
        gb.project(np.zeros(64))


def _laplacian_error(points):
    basis = dirichlet_eigenpairs(4, 1.0)
    gb = GridBasis(basis, uniform_grid(0.0, 1.0, points))
    c = np.array([1.0, -0.5, 0.25, 0.1])
    f = gb.synthesize(c)
    h = gb.grid.spacing
    fd = (f[2:] - 2 * f[1:-1] + f[:-2]) / (h * h)
    exact = gb.synthesize(spectral_laplacian(c, basis))[1:-1]
    return float(np.max(np.abs(fd - exact))), float(np.max(np.abs(exact)))


def test_spectral_laplacian_matches_finite_differences():
    coarse, scale = _laplacian_error(201)
    fine, _ = _laplacian_error(401)
    assert fine <= 1e-3 * scale
    assert 3.5 <= coarse / fine <= 4.5


def test_domain_geometry_nodes():
    geometry = DomainGeometry(4.0, 1.0, 3.0, 257)
    assert geometry.magnet_nodes == slice(64, 193)
    assert geometry.magnet_points == 129
    assert geometry.check_modes(16, 8, 64) is None
    assert "grid_points" in geometry.check_modes(100)


@pytest.mark.parametrize("args", [(4.0, 1.1, 3.0, 257), (4.0, 3.0, 1.0, 257), (4.0, 0.0, 3.0, 257), (4.0, 1.0, 4.0, 257)])
def test_domain_geometry_rejects_bad_magnet(args):
    with pytest.raises(InvalidArgument):
        DomainGeometry(*args)
