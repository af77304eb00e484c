import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqlimit.errors import NodeDetected, ValidationError, WindingDetected
from cqlimit.numerics import Grid2D, integrate
from cqlimit.operators import PointEval, WindowMean, gaussian_kernel
from cqlimit.polar import (PolarState, decompose, find_nodes, measure_position, reconstruct, region_mask,
                           unwrap_phase)

G = Grid2D(32, 32, -4, 4, -4, 4)
X, Y = G.mesh()
WIN = WindowMean(G, -1.0, 1.0)


def gauss(sx=1.0, sy=1.0, x0=0.0, y0=0.0):
    R = np.exp(-((X - x0) ** 2) / (4 * sx**2) - (Y - y0) ** 2 / (4 * sy**2))
    return R / np.sqrt(integrate(R**2, G))


def test_real_positive_has_zero_phase():
    assert np.abs(unwrap_phase(gauss().astype(complex))).max() == 0


def test_continuous_phase_is_recovered():
    g = 2.5 * np.sin(Y / 2)
    theta = unwrap_phase(np.exp(1j * g) * gauss())
    assert np.abs(theta - g).max() <= 1e-10


def test_phase_beyond_pi_is_unwrapped():
    g = 3.0 * X
    theta = unwrap_phase(np.exp(1j * g) * gauss(2, 2))
    anchor = np.unravel_index(np.argmax(gauss(2, 2)), G.shape)
    assert np.abs(theta - g - (theta - g)[anchor]).max() <= 1e-10


def test_interior_zero_raises():
    psi = gauss().astype(complex)
    psi[16, 16] = 0
    with pytest.raises(NodeDetected):
        unwrap_phase(psi)


def test_vortex_is_a_node():
    psi = (X + 1j * Y) * gauss()
    assert find_nodes(psi).any()
    with pytest.raises(NodeDetected):
        decompose(psi, 0.1, WIN)


def test_decayed_tails_are_vacuum_not_nodes():
    psi = gauss(0.3, 0.3).astype(complex)
    assert (np.abs(psi) < 1e-8).any()
    assert not find_nodes(psi).any()


def test_winding_check_is_opt_in():
    k = 2 * np.pi / G.lx
    psi = np.exp(1j * k * X) * np.ones(G.shape) / 8
    unwrap_phase(psi)
    with pytest.raises(WindingDetected):
        unwrap_phase(psi, check_winding=True)


def test_decompose_plane_wave_in_x():
    eps, k = 0.1, 0.7
    Gy = np.exp(-(Y**2) / 4) + 0 * X
    st = decompose(np.exp(1j * k * X) * Gy, eps, WIN)
    anchor_shift = st.theta_A - eps * k * G.x
    assert np.ptp(anchor_shift) <= 1e-12
    assert np.abs(st.theta_B).max() <= 1e-12
    assert np.abs(st.R - Gy).max() <= 1e-15


def test_decompose_odd_phase_in_y():
    g = 0.8 * np.sin(Y) + 0 * X
    st = decompose(np.exp(1j * g) * gauss(), 0.1, WIN)
    assert np.abs(st.theta_A).max() <= 1e-12
    assert np.abs(st.theta_B - g).max() <= 1e-12


def test_reconstruct_examples():
    R = gauss()
    st = PolarState(R, np.zeros(G.nx), np.zeros(G.shape), WIN)
    assert np.array_equal(reconstruct(st, 0.3), R.astype(complex))
    st2 = PolarState(R, 0.3 * 1.5 * G.x, np.zeros(G.shape), WIN)
    assert np.abs(reconstruct(st2, 0.3) - np.exp(1.5j * X) * R).max() <= 1e-14
    with pytest.raises(ValidationError):
        reconstruct(st, 0.0)
    with pytest.raises(ValidationError):
        decompose(R.astype(complex), -1.0, WIN)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5),
       st.sampled_from([1.0, 0.1, 0.01]), st.sampled_from(range(3)))
def test_round_trip_property(x0, y0, a, b, eps, ki):
    kernel = [WIN, PointEval(G, 0.5), gaussian_kernel(G, 0.0, 1.0)][ki]
    theta = a * np.sin(X / 2 + Y / 3) + b * X * Y / 4
    psi = np.exp(1j * theta) * (gauss(1.2, 1.2, x0, y0) + 0.05)
    st = decompose(psi, eps, kernel)
    assert np.abs(reconstruct(st, eps) - psi).max() <= 1e-10
    assert st.constraint_residual() <= 1e-10


def test_measure_full_domain_is_identity():
    st = decompose(gauss().astype(complex), 0.1, WIN)
    assert measure_position(st, [(None, None)]) is st


def test_measure_half_space_halves_probability():
    # nodes at +-(j + 1/2) dy, so the grid is mirror symmetric about y = 0
    g = Grid2D(32, 32, -4, 4, -4.125, 3.875)
    Xg, Yg = g.mesh()
    R = np.exp(-(Xg**2) / 4 - Yg**2)
    R /= np.sqrt(integrate(R**2, g))
    st = PolarState(R, 0.2 * g.x, 0.1 * np.sin(Yg), WindowMean(g, -1, 1))
    m = measure_position(st, [(None, (0.0, None))], r_min=0.0)
    assert abs(integrate(m.R**2, g) - 0.5) <= 1e-8
    assert m.theta_A is st.theta_A and m.theta_B is st.theta_B


def test_measure_clamps_and_renormalises():
    st = PolarState(gauss(), np.zeros(G.nx), np.zeros(G.shape), WIN)
    m = measure_position(st, [(None, (0.0, None))], renormalize=True)
    assert abs(integrate(m.R**2, G) - 1) <= 1e-12
    assert m.R.min() > 0
    assert m.clamp_mass > 0
    with pytest.raises(ValidationError):
        measure_position(st, [((10, 11), None)])


def test_region_mask_union():
    m = region_mask(G, [((None, -3), None), (None, (3, None))])
    assert m[0, 10] and m[10, -1] and not m[16, 16]
