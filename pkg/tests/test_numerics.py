import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqlimit.errors import GridError
from cqlimit.numerics import (Grid2D, edge_amplitude, fd4_derivative, fd_derivative, fourier_interpolate,
                              integrate, interpolate_monotone, partial_derivative)

G64 = Grid2D(64, 64, 0.0, 2.0, 0.0, 3.0)


def test_spectral_derivative_of_resolved_mode():
    X, _ = G64.mesh()
    k = 2 * np.pi / G64.lx
    d = partial_derivative(np.sin(k * X), G64, 0, 1)
    assert np.abs(d - k * np.cos(k * X)).max() <= 1e-10


def test_second_derivative_along_y():
    _, Y = G64.mesh()
    k = 2 * np.pi / G64.ly
    d = partial_derivative(np.sin(k * Y), G64, 1, 2)
    assert np.abs(d + k**2 * np.sin(k * Y)).max() <= 1e-9


@pytest.mark.parametrize("mode", ["spectral", "fd", "fd4"])
@pytest.mark.parametrize("axis", [0, 1])
@pytest.mark.parametrize("order", [1, 2])
def test_constant_field_has_zero_derivative(mode, axis, order):
    d = partial_derivative(np.full(G64.shape, 3.7), G64, axis, order, mode)
    assert np.abs(d).max() <= 1e-9


def test_spectral_mode_rejected_on_open_axis():
    g = Grid2D(16, 16, 0, 1, 0, 1, periodic_x=False)
    with pytest.raises(GridError):
        partial_derivative(np.zeros(g.shape), g, 0, 1, "spectral")
    partial_derivative(np.zeros(g.shape), g, 0, 1, "fd4")


def test_bad_order_and_mode():
    with pytest.raises(GridError):
        partial_derivative(np.zeros(G64.shape), G64, 0, 3)
    with pytest.raises(GridError):
        partial_derivative(np.zeros(G64.shape), G64, 0, 1, "chebyshev")
    with pytest.raises(GridError):
        partial_derivative(np.zeros((3, 64)), G64, 0, 1)


def test_grid_validation_collects_problems():
    with pytest.raises(GridError, match="nx.*ny"):
        Grid2D(4, 2, 0, 1, 0, 1)
    with pytest.raises(GridError):
        Grid2D(16, 16, 1, 0, 0, 1)


def test_fd_second_order_convergence():
    errs = []
    for n in (32, 64):
        x = np.linspace(0, 2 * np.pi, n, endpoint=False)
        errs.append(np.abs(fd_derivative(np.sin(x), x[1] - x[0]) - np.cos(x)).max())
    assert 3.5 < errs[0] / errs[1] < 4.5


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.integers(7, 40))
def test_fd4_exact_on_quartics(coef, n):
    x = np.linspace(-1.3, 0.7, n)
    p = np.polynomial.Polynomial(coef)
    h = x[1] - x[0]
    scale = 1 + sum(abs(c) for c in coef)
    assert np.abs(fd4_derivative(p(x), h) - p.deriv()(x)).max() <= 1e-8 * scale / h
    assert np.abs(fd4_derivative(p(x), h, order=2) - p.deriv(2)(x)).max() <= 1e-7 * scale / h**2


def test_integrate_examples():
    g = Grid2D(32, 32, 0, 1, 0, 1)
    assert integrate(np.ones(g.shape), g) == pytest.approx(1.0, abs=1e-14)
    _, Y = g.mesh()
    assert abs(integrate(np.sin(2 * np.pi * Y), g)) <= 1e-15
    gg = Grid2D(64, 64, -8, 8, -8, 8)
    X, Y = gg.mesh()
    rho = np.exp(-(X**2) / 2 - (Y - 0.3) ** 2 / 2) / (2 * np.pi)
    assert abs(integrate(rho, gg) - 1) <= 1e-8
    marg = integrate(rho, gg, axes=1)
    assert marg.shape == (64,)


def test_interpolate_monotone_examples():
    x = np.linspace(0, 2, 11)
    assert interpolate_monotone(x, x, 0.37) == pytest.approx(0.37, abs=1e-15)
    assert interpolate_monotone(x, 2 * x, 1.0) == pytest.approx(2.0, abs=1e-15)
    nodes = np.linspace(1, 2, 64)
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    assert np.abs(interpolate_monotone(nodes, nodes**3, mid) - mid**3).max() <= 1e-4
    with pytest.raises(GridError):
        interpolate_monotone(np.array([0.0, 1.0, 1.0]), np.zeros(3), 0.5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(-2, 5))
def test_fourier_interpolation_exact_for_trig_polynomials(c, q):
    n, L, x0 = 32, 5.0, -2.0
    x = x0 + L * np.arange(n) / n
    f = lambda t: c[0] + c[1] * np.cos(2 * np.pi * (t - x0) / L) + c[2] * np.sin(6 * np.pi * (t - x0) / L)
    got = fourier_interpolate(f(x), x0, L, np.array([q]))
    assert abs(got[0] - f(q)) <= 1e-12
    assert np.isrealobj(got)


def test_fourier_interpolation_reproduces_nodes_for_2d_values():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(16, 3)) + 1j * rng.normal(size=(16, 3))
    x = np.arange(16) / 16
    assert np.abs(fourier_interpolate(v, 0.0, 1.0, x) - v).max() <= 1e-13


def test_edge_amplitude():
    f = np.zeros((8, 8))
    f[0, 3] = -2.0
    f[4, 4] = 9.0
    assert edge_amplitude(f) == 2.0
    assert edge_amplitude(np.array([1.0, 5.0, -3.0])) == 3.0
