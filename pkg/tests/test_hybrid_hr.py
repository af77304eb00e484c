import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqlimit.errors import AmplitudeFloorBreached, ValidationError
from cqlimit.full_qm import ModelParams
from cqlimit.hybrid_hr import (HRSolver, HydroState, check_flow_commutation, evolve_hr, evolve_hydro,
                               field_XC, field_XHR, field_XI, field_XQ, flow_map, hydro_rhs)
from cqlimit.numerics import Grid2D, integrate
from cqlimit.operators import WindowMean, apply_A

G = Grid2D(40, 40, -4, 4, -4, 4)
X, Y = G.mesh()
WIN = WindowMean(G, -1, 1)


def gaussian_rho(cx=1.0, cy=1.0, x0=0.0):
    rho = np.exp(-cx * (X - x0) ** 2 - cy * Y**2)
    return rho / integrate(rho, G)


def hydro(theta, rho=None):
    return HydroState.from_density(gaussian_rho() if rho is None else rho, theta + 0 * X, WIN)


GENERIC = hydro(0.3 * X + 0.2 * X * Y + 0.1 * Y**2 - 0.05 * X**2, gaussian_rho(0.7, 1.3, 0.4))
MP = ModelParams(1.3, 0.8, 0.1, lambda x: x**2 / 2, lambda x, y: y**2 / 2 + 0.1 * x * y)


def test_XC_zero_phase_gives_minus_U():
    mp = ModelParams(1, 1, 0.1, lambda x: x**2 / 2, None)
    drho, dth = field_XC(hydro(0 * X), mp)
    assert np.abs(drho).max() == 0
    np.testing.assert_allclose(dth, -X**2 / 2, atol=1e-14)


def test_XC_plane_wave_transports_density():
    k, m1 = 0.7, 2.0
    mp = ModelParams(m1, 1, 0.1, None, None)
    state = hydro(k * X)
    drho, dth = field_XC(state, mp)
    # d rho / dx = -2 x rho for the unit Gaussian
    np.testing.assert_allclose(drho, -(k / m1) * (-2 * X * state.rho), atol=1e-12)
    np.testing.assert_allclose(dth, -k**2 / (2 * m1), atol=1e-12)


def test_XQ_x_only_phase_leaves_density():
    drho, _ = field_XQ(hydro(0.4 * X - 0.1 * X**2), MP)
    assert np.abs(drho).max() < 1e-14


def test_XQ_ground_state_phase_is_y_independent():
    mp = ModelParams(1, 1, 0.1, None, lambda x, y: y**2 / 2)
    state = hydro(0 * X, gaussian_rho(0.5, 1.0))
    drho, dth = field_XQ(state, mp)
    assert np.abs(drho).max() < 1e-14
    np.testing.assert_allclose(dth, dth[:, :1] * np.ones_like(dth), atol=1e-11)


def test_XHR_eigenstate_phase_rate_is_minus_energy():
    mp = ModelParams(1, 1, 0.1, None, lambda x, y: y**2 / 2)
    state = hydro(0 * X, np.exp(-Y**2) / integrate(np.exp(-Y**2) + 0 * X, G))
    drho, dth = field_XHR(state, mp)
    assert np.abs(drho).max() < 1e-14
    np.testing.assert_allclose(dth, -0.5, atol=1e-11)


def test_XI_examples():
    state = hydro(0.4 * X)
    drho, dth = field_XI(state, MP)
    assert np.abs(drho).max() < 1e-14
    # theta_B = 0: the theta slot is the averaged quantum potential, here A of (y^2 - 1) / (2 m2)
    expected = apply_A(WIN, (Y**2 - 1) / (2 * MP.m2))
    np.testing.assert_allclose(dth, expected, atol=1e-11)


def test_decomposition_identity():
    hr = field_XHR(GENERIC, MP)
    parts = [f(GENERIC, MP) for f in (field_XC, field_XQ, field_XI)]
    for slot in range(2):
        total = sum(p[slot] for p in parts)
        assert np.abs(total - hr[slot]).max() <= 1e-11 * max(1.0, np.abs(hr[slot]).max())


def test_hydro_rhs_selection():
    ds_all, dth_all = hydro_rhs(GENERIC, MP, "XHR")
    ds_sum, dth_sum = hydro_rhs(GENERIC, MP, ("XC", "XQ", "XI"))
    np.testing.assert_array_equal(ds_all, ds_sum)
    np.testing.assert_array_equal(dth_all, dth_sum)
    with pytest.raises(ValidationError):
        hydro_rhs(GENERIC, MP, "XZ")
    with pytest.raises(ValidationError):
        hydro_rhs(GENERIC, MP, ())


@pytest.mark.parametrize("field", [field_XC, field_XQ, field_XI, field_XHR])
def test_continuity_slot_conserves_mass(field):
    # density negligible at the edges, where the quadrature sees no outflow
    s = -(X - 0.2) ** 2 - Y**2
    s = s - 0.5 * np.log(integrate(np.exp(2 * s), G))
    drho, _ = field(HydroState(s, GENERIC.theta, WIN), MP)
    assert abs(integrate(drho, G)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 10.0))
def test_quantum_potential_scale_invariant(c):
    scaled = HydroState(GENERIC.s + 0.5 * np.log(c), GENERIC.theta, WIN)
    for field in (field_XQ, field_XI, field_XHR):
        a, b = field(GENERIC, MP), field(scaled, MP)
        np.testing.assert_allclose(b.dtheta, a.dtheta, atol=1e-10)
        np.testing.assert_allclose(b.drho, c * a.drho, atol=1e-10 * c)


def test_from_density_validation():
    with pytest.raises(ValidationError):
        HydroState.from_density(-gaussian_rho(), 0 * X, WIN)
    with pytest.raises(AmplitudeFloorBreached):
        HydroState.from_density(np.zeros(G.shape), 0 * X, WIN)
    GENERIC.validate()
    with pytest.raises(ValidationError):
        HydroState(GENERIC.s + 1.0, GENERIC.theta, WIN).validate()


def test_rigid_transport_and_mass():
    k, t = 0.8, 0.5
    state = hydro(k * X)
    mp = ModelParams(1, 1, 0.1, None, None)
    traj = evolve_hydro(state, mp, "XC", 1e-2, 50)
    final = traj.final()
    # s is quadratic, so fd4 and RK4 are both exact
    shift = (X**2 - (X - k * t) ** 2) / 2
    np.testing.assert_allclose(final.s, state.s + shift, atol=1e-11)
    np.testing.assert_allclose(final.theta, k * X - k**2 * t / 2, atol=1e-12)
    assert abs(final.mass() - 1) < 1e-6


def test_evolve_hydro_validation():
    with pytest.raises(ValidationError):
        evolve_hydro(GENERIC, MP, "XC", -1e-3, 5)
    with pytest.raises(ValidationError):
        evolve_hydro(GENERIC, MP, "XX", 1e-3, 5)


def test_flow_map_zero_time_is_identity():
    assert flow_map(GENERIC, MP, "XC", 0.0, 1e-2) is GENERIC


def test_commutation_zero_times():
    for t, s in ((0.0, 0.1), (0.1, 0.0)):
        res = check_flow_commutation(GENERIC, MP, t, s, 1e-2)
        assert res["commutator"] == 0.0
    assert check_flow_commutation(GENERIC, MP, 0.0, 0.0, 1e-2) == {"commutator": 0.0, "splitting": 0.0}


def _hr_grid():
    g = Grid2D(32, 64, -2 * np.pi, 2 * np.pi, -8, 8)
    return g, g.mesh()


def test_hr_x_uniform_amplitude_is_linear_schrodinger():
    # |psi| independent of x: the nonlinear term vanishes and a plane wave times
    # the oscillator ground state is an eigenstate
    g, (Xg, Yg) = _hr_grid()
    mp = ModelParams(1, 1, 0.1, None, lambda x, y: y**2 / 2)
    phi = np.exp(-Yg**2 / 2 + 1j * Xg)
    psi0 = phi / np.sqrt(integrate(np.abs(phi) ** 2, g))
    t = 1.0
    out = evolve_hr(psi0, g, mp, 1e-3, 1000).final()
    # tolerance is the Strang error of the y oscillator at this step
    np.testing.assert_allclose(out, np.exp(-1j * (0.5 + 0.5) * t) * psi0, atol=1e-7)


def test_hr_mass_and_amplitude_preserving_kick():
    g, (Xg, Yg) = _hr_grid()
    mp = ModelParams(1, 1, 0.1, lambda x: 0.1 * x**2, lambda x, y: y**2 / 2 + 0.2 * x * y)
    psi0 = np.exp(-Xg**2 / 2 - (Yg - 1) ** 2 / 2 + 0.3j * Xg * Yg)
    psi0 = psi0 / np.sqrt(integrate(np.abs(psi0) ** 2, g))
    solver = HRSolver(g, mp, 1e-2)
    np.testing.assert_allclose(np.abs(solver._half(psi0)), np.abs(psi0), atol=1e-15)
    traj = evolve_hr(psi0, g, mp, 1e-2, 100, stride=25)
    assert len(traj.states) == 5
    for psi in traj.states:
        assert abs(integrate(np.abs(psi) ** 2, g) - 1) < 1e-12
