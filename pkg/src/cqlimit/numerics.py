"""Uniform periodic grids, derivatives, quadrature and interpolation.

Fields are plain numpy arrays indexed ``[ix, iy]`` (``indexing="ij"``); functions
of ``x`` alone are 1D arrays of length ``nx``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import GridError


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor grid on ``[x_min, x_max) x [y_min, y_max)``."""

    nx: int
    ny: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    periodic_x: bool = True
    periodic_y: bool = True

    def __post_init__(self):
        problems = []
        if int(self.nx) != self.nx or self.nx < 8:
            problems.append(f"nx must be an integer >= 8, got {self.nx}")
        if int(self.ny) != self.ny or self.ny < 8:
            problems.append(f"ny must be an integer >= 8, got {self.ny}")
        if not self.x_max > self.x_min:
            problems.append("x_max must exceed x_min")
        if not self.y_max > self.y_min:
            problems.append("y_max must exceed y_min")
        if problems:
            raise GridError("; ".join(problems))

    @property
    def lx(self) -> float:
        return self.x_max - self.x_min

    @property
    def ly(self) -> float:
        return self.y_max - self.y_min

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.y_min + self.dy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def kx(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)

    @cached_property
    def ky(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)

    def spacing(self, axis: int) -> float:
        return (self.dx, self.dy)[axis]

    def length(self, axis: int) -> float:
        return (self.lx, self.ly)[axis]

    def periodic(self, axis: int) -> bool:
        return (self.periodic_x, self.periodic_y)[axis]

    def npoints(self, axis: int) -> int:
        return (self.nx, self.ny)[axis]


def _check_axis(field: np.ndarray, grid: Grid2D, axis: int) -> None:
    if axis not in (0, 1):
        raise GridError(f"axis must be 0 (x) or 1 (y), got {axis}")
    if field.ndim <= axis or field.shape[axis] != grid.npoints(axis):
        raise GridError(f"field shape {field.shape} does not match grid along axis {axis}")


def spectral_derivative(values: np.ndarray, length: float, axis: int = 0, order: int = 1) -> np.ndarray:
    """Fourier derivative of samples on a periodic axis of the given length."""
    n = values.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    if order % 2 == 1 and n % 2 == 0:
        k[n // 2] = 0.0
    mult = (1j * k) ** order
    shape = [1] * values.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)
    if np.isrealobj(values):
        return out.real
    return out


def fd_derivative(values: np.ndarray, h: float, axis: int = 0, order: int = 1, periodic: bool = True) -> np.ndarray:
    """Second-order central differences; one-sided second-order stencils at open edges."""
    f = np.moveaxis(np.asarray(values), axis, 0)
    if periodic:
        fp, fm = np.roll(f, -1, axis=0), np.roll(f, 1, axis=0)
        out = (fp - fm) / (2 * h) if order == 1 else (fp - 2 * f + fm) / h**2
    elif order == 1:
        out = np.gradient(f, h, axis=0, edge_order=2)
    else:
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
        out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h**2
        out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / h**2
    return np.moveaxis(out, 0, axis)


# fourth-order stencils: interior central, two one-sided rows at each open edge
_D1_EDGE = np.array([[-25, 48, -36, 16, -3], [-3, -10, 18, -6, 1]]) / 12.0
_D2_EDGE = np.array([[45, -154, 214, -156, 61, -10], [10, -15, -4, 14, -6, 1]]) / 12.0


def fd4_derivative(values: np.ndarray, h: float, axis: int = 0, order: int = 1) -> np.ndarray:
    """Fourth-order finite differences on a non-periodic axis.

    Exact for polynomials of degree <= 4; used for phase fields, which need not
    be periodic on the box (for example a linear or quadratic classical phase).
    """
    f = np.moveaxis(np.asarray(values, dtype=float) if np.isrealobj(values) else np.asarray(values), axis, 0)
    n = f.shape[0]
    if n < 7:
        raise GridError("fourth-order differences need at least 7 nodes")
    out = np.empty_like(f)
    if order == 1:
        out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
        for row in range(2):
            st = _D1_EDGE[row]
            out[row] = np.tensordot(st, f[:5], axes=(0, 0)) / h
            out[n - 1 - row] = -np.tensordot(st, f[::-1][:5], axes=(0, 0)) / h
    elif order == 2:
        out[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h**2)
        for row in range(2):
            st = _D2_EDGE[row]
            out[row] = np.tensordot(st, f[:6], axes=(0, 0)) / h**2
            out[n - 1 - row] = np.tensordot(st, f[::-1][:6], axes=(0, 0)) / h**2
    else:
        raise GridError(f"order must be 1 or 2, got {order}")
    return np.moveaxis(out, 0, axis)


def partial_derivative(field: np.ndarray, grid: Grid2D, axis: int, order: int = 1, mode: str = "spectral") -> np.ndarray:
    """Derivative of a sampled field along ``axis`` (0 = x, 1 = y).

    ``mode`` is ``"spectral"`` (periodic axes only), ``"fd"`` (second-order central)
    or ``"fd4"`` (fourth-order, non-periodic stencils).
    """
    if order not in (1, 2):
        raise GridError(f"order must be 1 or 2, got {order}")
    _check_axis(field, grid, axis)
    h = grid.spacing(axis)
    if mode == "spectral":
        if not grid.periodic(axis):
            raise GridError("spectral derivative requested on a non-periodic axis")
        return spectral_derivative(field, grid.length(axis), axis, order)
    if mode == "fd":
        return fd_derivative(field, h, axis, order, periodic=grid.periodic(axis))
    if mode == "fd4":
        return fd4_derivative(field, h, axis, order)
    raise GridError(f"unknown derivative mode {mode!r}")


def integrate(field: np.ndarray, grid: Grid2D, axes=(0, 1)):
    """Riemann-sum quadrature over the listed axes with weights dx, dy.

    A 1D field is taken to be a function of x. Integrating a 2D field over y
    alone returns a function of x.
    """
    field = np.asarray(field)
    if np.isscalar(axes):
        axes = (axes,)
    axes = tuple(sorted(set(axes)))
    if field.ndim == 1:
        if axes != (0,):
            raise GridError("a 1D field can only be integrated over x")
        return field.sum() * grid.dx
    weight = 1.0
    for ax in axes:
        weight *= grid.spacing(ax)
    return field.sum(axis=axes) * weight


def interpolate_monotone(nodes: np.ndarray, samples: np.ndarray, query) -> np.ndarray:
    """Shape-preserving piecewise-cubic (PCHIP) interpolation, exact at nodes."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or np.any(np.diff(nodes) <= 0):
        raise GridError("interpolation abscissae must be strictly increasing")
    return PchipInterpolator(nodes, np.asarray(samples), extrapolate=True)(query)


def fourier_interpolate(values: np.ndarray, origin: float, length: float, query: np.ndarray) -> np.ndarray:
    """Band-limited trigonometric interpolation along axis 0 at arbitrary points.

    ``values`` has shape ``(n, ...)``; the result has shape ``(len(query), ...)``.
    The Nyquist coefficient of an even-length transform is split evenly between
    the two aliased modes so real data stay real.
    """
    n = values.shape[0]
    coef = np.fft.fft(values, axis=0) / n
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    phase = np.exp(1j * np.outer(np.asarray(query) - origin, k))
    if n % 2 == 0:
        phase[:, n // 2] = np.cos(k[n // 2] * (np.asarray(query) - origin))
    out = phase @ coef.reshape(n, -1)
    out = out.reshape((len(query),) + values.shape[1:])
    if np.isrealobj(values):
        return out.real
    return out


def edge_amplitude(field: np.ndarray) -> float:
    """Largest magnitude on the outermost rows and columns of the box."""
    a = np.abs(field)
    if a.ndim == 1:
        return float(max(a[0], a[-1]))
    return float(max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max()))
