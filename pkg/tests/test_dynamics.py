import numpy as np
import pytest

from spllg.discretization import Discretization
from spllg.dynamics import (
    GALERKIN,
    POINTWISE,
    GilbertOperator,
    initial_magnetization,
    initial_spinor,
    initial_state,
    coupled_step,
    llg_drift,
    llg_step,
    resolve_workers,
    schrodinger_generator,
    schrodinger_step,
    simulate_ensemble,
    simulate_path,
)
from spllg.errors import InvalidArgument
from spllg.fields import (
    MagnetizationState,
    SpinorState,
    coulomb_potential,
    density,
    effective_field,
    skew,
)
from spllg.noise import g_eval


def test_initial_spinors_are_orthonormal(small_config, small_disc):
    spinor = initial_spinor(small_config, small_disc)
    flat = spinor.coefficients.reshape(spinor.count, -1)
    assert np.allclose(flat.conj() @ flat.T, np.eye(spinor.count), atol=1e-12)
    assert spinor.weights.tolist() == [0.5, 0.5]


def test_initial_magnetization_shape(small_config, small_disc):
    magnetization = initial_magnetization(small_config, small_disc)
    assert magnetization.coefficients.shape == (small_config.n_modes_magnet + 1, 3)
    flat = initial_magnetization(small_config.replace(m0_tilt=0.0), small_disc)
    assert np.allclose(small_disc.magnet.synthesize(flat.coefficients), [0.0, 0.0, 1.0])


def _step_inputs(config, disc):
    spinor = initial_spinor(config, disc)
    V = coulomb_potential(density(spinor, disc.schrodinger), disc.potential)
    m = disc.magnet.synthesize(initial_magnetization(config, disc).coefficients)
    return spinor, V, disc.embed(m)


def test_schrodinger_generator_is_hermitian(small_config, small_disc):
    _, V, m_full = _step_inputs(small_config, small_disc)
    H = schrodinger_generator(V, m_full, small_disc)
    assert np.allclose(H, H.conj().T, atol=1e-12)


def test_schrodinger_step_preserves_mass_and_reverses(small_config, small_disc):
    spinor, V, m_full = _step_inputs(small_config, small_disc)
    stepped = schrodinger_step(spinor, V, m_full, 0.01, small_disc)
    assert np.allclose(stepped.masses(), spinor.masses(), rtol=1e-12)
    assert not np.allclose(stepped.coefficients, spinor.coefficients)
    back = schrodinger_step(stepped, V, m_full, -0.01, small_disc)
    assert np.allclose(back.coefficients, spinor.coefficients, atol=1e-12)


def test_gilbert_forms_agree_for_uniform_magnetization(small_disc):
    rng = np.random.default_rng(1)
    points = small_disc.magnet_grid.size
    m = np.tile([0.3, -0.2, 0.9], (points, 1))
    field = rng.normal(size=(points, 3))
    pointwise = GilbertOperator(m, 0.7, small_disc, POINTWISE).apply(field)
    galerkin = GilbertOperator(m, 0.7, small_disc, GALERKIN).apply(field)
    assert np.allclose(pointwise, galerkin, atol=1e-12)


def test_gilbert_operator_rejects_unknown_form(small_disc):
    m = np.zeros((small_disc.magnet_grid.size, 3))
    with pytest.raises(InvalidArgument):
        GilbertOperator(m, 1.0, small_disc, "implicit")


def test_llg_step_requires_positive_dt(small_config, small_disc):
    magnetization = initial_magnetization(small_config, small_disc)
    H = effective_field(magnetization, None, small_disc)
    with pytest.raises(InvalidArgument):
        llg_step(magnetization, H, 0.0, small_disc, 1.0, 1.0)


def test_noise_free_llg_step_ledgers(small_config, small_disc):
    magnetization = initial_magnetization(small_config, small_disc)
    H = effective_field(magnetization, None, small_disc)
    dt = 1e-3
    result = llg_step(magnetization, H, dt, small_disc, 1.0, 1.0)
    drift = (result.magnetization.coefficients - magnetization.coefficients) / dt
    assert result.wiener == 0.0 and result.jump == 0.0
    assert result.dissipation == pytest.approx(2.0 * np.sum(drift * drift) * dt, rel=1e-10)


def test_additive_noise_at_zero_magnetization(small_config):
    config = small_config.replace(noise_family="additive")
    disc = Discretization(config)
    zero = MagnetizationState(np.zeros((disc.magnet.size, 3)))
    H = np.zeros((disc.magnet_grid.size, 3))
    dW = np.array([0.03, -0.02])
    alpha = 0.5
    result = llg_step(zero, H, 1e-3, disc, alpha, 1.0, noise=disc.noise, dW=dW)
    m = np.zeros((disc.magnet_grid.size, 3))
    expected = -sum(disc.magnet.project(g_eval(disc.noise, m, i)) * dW[i] for i in range(2)) / alpha
    assert np.allclose(result.magnetization.coefficients, expected, atol=1e-14)


def test_coupled_step_advances_time_and_ledgers(quiet_config):
    disc = Discretization(quiet_config)
    state = initial_state(quiet_config, disc)
    after = coupled_step(state, quiet_config.dt, disc)
    assert after.time == pytest.approx(quiet_config.dt)
    assert after.dissipation > 0.0
    assert after.wiener_ledger == 0.0 and after.jump_ledger == 0.0
    assert after.penalty_peak >= state.penalty_peak
    assert np.allclose(after.spinor.masses(), state.spinor.masses(), rtol=1e-12)


def test_simulate_path_without_noise(quiet_config):
    trajectory = simulate_path(quiet_config)
    assert trajectory.completed
    assert np.allclose(trajectory.times, [0.0, 0.005, 0.01])
    masses = np.array([s.masses() for s in trajectory.spinors])
    assert np.max(np.abs(masses - masses[0])) <= 1e-10
    assert np.all(np.diff(trajectory.dissipation) >= 0.0)
    assert np.all(trajectory.wiener_ledger == 0.0)


def test_noisy_paths_are_reproducible(small_config):
    disc = Discretization(small_config)
    a = simulate_path(small_config, 0, disc)
    b = simulate_path(small_config, 0, disc)
    c = simulate_path(small_config, 1, disc)
    assert np.array_equal(a.magnetizations[-1].coefficients, b.magnetizations[-1].coefficients)
    assert np.array_equal(a.wiener_ledger, b.wiener_ledger)
    assert not np.array_equal(a.magnetizations[-1].coefficients, c.magnetizations[-1].coefficients)


def test_zero_amplitude_jumps_match_jump_free_run(small_config):
    silent = simulate_path(small_config.replace(jump_amplitude=0.0))
    absent = simulate_path(small_config.replace(jump_intensity=0.0))
    assert np.array_equal(silent.magnetizations[-1].coefficients, absent.magnetizations[-1].coefficients)
    assert np.all(silent.jump_ledger == 0.0)


def test_ensemble_independent_of_worker_count(small_config):
    serial = simulate_ensemble(small_config.replace(workers=1))
    threaded = simulate_ensemble(small_config.replace(workers=2))
    assert [t.path_index for t in threaded.trajectories] == [0, 1]
    for a, b in zip(serial.trajectories, threaded.trajectories):
        assert np.array_equal(a.magnetizations[-1].coefficients, b.magnetizations[-1].coefficients)
        assert np.array_equal(a.spinors[-1].coefficients, b.spinors[-1].coefficients)


def test_unstable_path_is_recorded_not_raised(small_config):
    config = small_config.replace(noise=False, k=1e6, T=0.05, dt=0.001, save_every=5)
    with np.errstate(all="ignore"):
        trajectory = simulate_path(config)
    assert not trajectory.completed
    assert 0.0 < trajectory.failure.time <= 0.05
    assert trajectory.failure.path_index == 0
    assert len(trajectory.times) < config.save_count


def test_simulate_path_rejects_negative_index(small_config):
    with pytest.raises(InvalidArgument):
        simulate_path(small_config, -1)


def test_resolve_workers_respects_cap(monkeypatch):
    monkeypatch.setenv("SPLLG_MAX_WORKERS", "1")
    assert resolve_workers(8) == 1
    monkeypatch.delenv("SPLLG_MAX_WORKERS")
    assert resolve_workers(3) == 3
    assert resolve_workers(0) == 1


def _uniform(disc, vector):
    return MagnetizationState(disc.magnet.project(np.tile(vector, (disc.magnet_grid.size, 1))))


@pytest.mark.parametrize("form", [POINTWISE, GALERKIN])
def test_llg_drift_vanishes_on_saturated_uniform_field(small_disc, form):
    magnetization = _uniform(small_disc, [0.6, 0.0, 0.8])
    H = np.zeros((small_disc.magnet_grid.size, 3))
    drift = llg_drift(magnetization, H, small_disc, 0.5, 1.0, form=form)
    assert np.allclose(drift, 0.0, atol=1e-13)


@pytest.mark.parametrize("form", [POINTWISE, GALERKIN])
def test_llg_drift_penalty_on_oversaturated_field(small_disc, form):
    alpha = 0.5
    magnetization = _uniform(small_disc, [0.0, 0.0, 2.0])
    H = np.zeros((small_disc.magnet_grid.size, 3))
    drift = small_disc.magnet.synthesize(llg_drift(magnetization, H, small_disc, alpha, 1.0, form=form))
    m = np.array([0.0, 0.0, 2.0])
    expected = np.linalg.solve(alpha * np.eye(3) + skew(m), -3.0 * m)
    assert np.allclose(expected, [0.0, 0.0, -6.0 / alpha], atol=1e-14)
    assert np.allclose(drift, expected, atol=1e-12)


def test_llg_drift_is_affine_in_field(small_config, small_disc):
    rng = np.random.default_rng(11)
    magnetization = initial_magnetization(small_config, small_disc)
    points = small_disc.magnet_grid.size
    H1, H2 = rng.normal(size=(points, 3)), rng.normal(size=(points, 3))
    zero = np.zeros((points, 3))

    def drift(H):
        return llg_drift(magnetization, H, small_disc, 0.8, 2.0, noise=small_disc.noise)

    assert np.allclose(drift(H1 + H2), drift(H1) + drift(H2) - drift(zero), atol=1e-12)


def test_cayley_step_matches_free_phase(small_disc):
    h = 1
    lam = small_disc.schrodinger.eigenvalues[h]
    coefficients = np.zeros((1, small_disc.schrodinger.size, 2), dtype=complex)
    coefficients[0, h, 0] = 1.0
    spinor = SpinorState(coefficients, np.ones(1))
    V = np.zeros(small_disc.grid.size)
    errors = []
    for dt in (0.04, 0.02):
        stepped = schrodinger_step(spinor, V, None, dt, small_disc)
        exact = np.exp(-0.5j * lam * dt)
        errors.append(abs(stepped.coefficients[0, h, 0] - exact))
        others = np.delete(stepped.coefficients.reshape(-1), 2 * h)
        assert np.allclose(others, 0.0, atol=1e-14)
        theta = 0.5 * lam * dt
        assert errors[-1] <= theta ** 3 / 12 * 1.01 + 1e-15
    assert errors[0] / errors[1] == pytest.approx(8.0, rel=0.05)


def test_zero_spinor_stays_zero(small_disc):
    spinor = SpinorState(np.zeros((1, small_disc.schrodinger.size, 2), dtype=complex), np.ones(1))
    V = np.zeros(small_disc.grid.size)
    assert np.all(schrodinger_step(spinor, V, None, 0.01, small_disc).coefficients == 0.0)


def test_uncoupled_step_splits_into_independent_substeps(quiet_config):
    config = quiet_config.replace(coupling=False)
    disc = Discretization(config)
    state = initial_state(config, disc)
    dt = config.dt
    after = coupled_step(state, dt, disc)

    def half(magnetization):
        H = effective_field(magnetization, None, disc, stray=config.stray_field, uniaxial=config.anisotropy)
        return llg_step(magnetization, H, 0.5 * dt, disc, config.alpha, config.k, form=config.gilbert_form)

    first = half(state.magnetization)
    second = half(first.magnetization)
    V = coulomb_potential(density(state.spinor, disc.schrodinger), disc.potential)
    spinor = schrodinger_step(state.spinor, V, None, dt, disc)
    assert np.allclose(after.magnetization.coefficients, second.magnetization.coefficients, rtol=0, atol=1e-14)
    assert np.allclose(after.spinor.coefficients, spinor.coefficients, rtol=0, atol=1e-14)
    assert after.dissipation == pytest.approx(first.dissipation + second.dissipation, rel=1e-12)


def test_free_magnet_without_penalty_stays_constant(quiet_config):
    config = quiet_config.replace(
        k=0.0, m0_tilt=0.0, stray_field=False, anisotropy=False, coupling=False, T=0.02, save_every=10
    )
    trajectory = simulate_path(config)
    assert trajectory.completed
    start = trajectory.magnetizations[0].coefficients
    for magnetization in trajectory.magnetizations[1:]:
        assert np.allclose(magnetization.coefficients, start, atol=1e-12)
    assert np.allclose(trajectory.dissipation, 0.0, atol=1e-20)
