"""Averaging projections acting on the quantum coordinate y.

Every kernel reduces a field ``phi[ix, iy]`` to a function of x by a fixed set of
weights over the y-nodes; ``apply_A`` replicates that function along y. The
complement ``B = 1 - A``, the scaled exponential ``exp(tau A) = e^tau A + B`` and
the change-of-kernel map ``T = 1 + A - A'`` are built on top.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import KernelError
from .numerics import Grid2D


class AveragingKernel:
    """Base class; subclasses fill in ``average``."""

    grid: Grid2D

    def average(self, field: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.grid == other.grid and self._key() == other._key()

    def __hash__(self):
        return hash((type(self).__name__, self.grid, self._key()))

    def _key(self):
        raise NotImplementedError


class WindowMean(AveragingKernel):
    """Arithmetic mean over the y-nodes lying in ``[a, b]``.

    Using the plain node mean (no trapezoid end weights) keeps ``A(A phi) == A phi``
    exact in floating point.
    """

    def __init__(self, grid: Grid2D, a: float, b: float):
        if not a < b:
            raise KernelError(f"window needs a < b, got [{a}, {b}]")
        if a < grid.y_min or b > grid.y_max:
            raise KernelError(f"window [{a}, {b}] lies outside the y-domain [{grid.y_min}, {grid.y_max}]")
        tol = 1e-9 * grid.dy
        idx = np.nonzero((grid.y >= a - tol) & (grid.y <= b + tol))[0]
        if idx.size == 0:
            raise KernelError(f"window [{a}, {b}] contains no grid nodes")
        self.grid, self.a, self.b = grid, float(a), float(b)
        self.start, self.stop = int(idx[0]), int(idx[-1]) + 1

    def average(self, field):
        return np.mean(field[:, self.start:self.stop], axis=1)

    def spec(self):
        return {"type": "window", "a": self.a, "b": self.b}

    def _key(self):
        return (self.a, self.b)

    def __repr__(self):
        return f"WindowMean(a={self.a}, b={self.b})"


class GeneralKernel(AveragingKernel):
    """Weighted average with a sampled weight ``alpha(y)`` of unit integral.

    The weights are renormalised once so the discrete quadrature of alpha is 1.
    """

    def __init__(self, grid: Grid2D, alpha: np.ndarray, label: str = "alpha"):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (grid.ny,):
            raise KernelError(f"alpha must have {grid.ny} samples, got shape {alpha.shape}")
        if not np.all(np.isfinite(alpha)):
            raise KernelError("alpha samples must be finite")
        total = alpha.sum()
        if total == 0:
            raise KernelError("alpha integrates to zero and cannot be normalised")
        self.grid, self.label = grid, label
        self.weights = alpha / total
        self.alpha = self.weights / grid.dy

    def average(self, field):
        return field @ self.weights

    def spec(self):
        return {"type": "general", "alpha_expr": self.label}

    def _key(self):
        return (self.label, self.weights.tobytes())

    def __repr__(self):
        return f"GeneralKernel({self.label})"


class PointEval(AveragingKernel):
    """Evaluation at ``y = a``, snapped to the nearest grid node."""

    def __init__(self, grid: Grid2D, a: float):
        if a < grid.y_min or a > grid.y_max:
            raise KernelError(f"point {a} lies outside the y-domain")
        self.grid, self.a = grid, float(a)
        self.index = int(np.argmin(np.abs(grid.y - a)))
        self.snap_distance = float(abs(grid.y[self.index] - a))

    def average(self, field):
        return field[:, self.index].copy()

    def spec(self):
        return {"type": "point", "a": self.a}

    def _key(self):
        return (self.a,)

    def __repr__(self):
        return f"PointEval(a={self.a})"


def gaussian_kernel(grid: Grid2D, center: float = 0.0, width: float = 1.0) -> GeneralKernel:
    alpha = np.exp(-0.5 * ((grid.y - center) / width) ** 2)
    return GeneralKernel(grid, alpha, label=f"gaussian({center}, {width})")


def _check(kernel: AveragingKernel, field: np.ndarray) -> None:
    if field.shape != kernel.grid.shape:
        raise KernelError(f"field shape {field.shape} does not match kernel grid {kernel.grid.shape}")


def average(kernel: AveragingKernel, field: np.ndarray) -> np.ndarray:
    """The y-independent value of ``A phi`` as a function of x."""
    _check(kernel, field)
    return kernel.average(field)


def broadcast_x(f: np.ndarray, ny: int) -> np.ndarray:
    return np.repeat(np.asarray(f)[:, None], ny, axis=1)


def apply_A(kernel: AveragingKernel, field: np.ndarray) -> np.ndarray:
    return broadcast_x(average(kernel, field), kernel.grid.ny)


def apply_B(kernel: AveragingKernel, field: np.ndarray) -> np.ndarray:
    return field - apply_A(kernel, field)


def exp_scaled_A(kernel: AveragingKernel, tau: float, field: np.ndarray) -> np.ndarray:
    """``exp(tau A) phi = e^tau A phi + B phi``."""
    if not math.isfinite(tau):
        raise KernelError("tau must be finite")
    if tau == 0:
        return np.array(field, copy=True)
    a = apply_A(kernel, field)
    return math.exp(tau) * a + (field - a)


def transform_T(kernel_from: AveragingKernel, kernel_to: AveragingKernel, field: np.ndarray) -> np.ndarray:
    """``(1 + A - A') phi``: maps the phase variable of one kernel to the other's."""
    if kernel_from.grid != kernel_to.grid:
        raise KernelError("kernels live on different grids")
    if kernel_from == kernel_to:
        return np.array(field, copy=True)
    return field + apply_A(kernel_from, field) - apply_A(kernel_to, field)


def inverse_transform_T(kernel_from: AveragingKernel, kernel_to: AveragingKernel, field: np.ndarray) -> np.ndarray:
    """``(1 + A' - A) phi``, the inverse of :func:`transform_T`."""
    return transform_T(kernel_to, kernel_from, field)


def make_kernel(spec: dict, grid: Grid2D, alpha_fn=None) -> AveragingKernel:
    """Build a kernel from a config mapping ``{type, a, b}``, ``{type, alpha_expr}`` or ``{type, a}``.

    ``alpha_fn`` evaluates ``alpha_expr`` on the y-nodes for general kernels.
    """
    kind = spec.get("type")
    if kind == "window":
        return WindowMean(grid, float(spec["a"]), float(spec["b"]))
    if kind == "point":
        return PointEval(grid, float(spec["a"]))
    if kind == "general":
        if alpha_fn is None:
            raise KernelError("general kernel needs an alpha evaluator")
        return GeneralKernel(grid, alpha_fn(grid.y), label=str(spec.get("alpha_expr", "alpha")))
    raise KernelError(f"unknown kernel type {kind!r}")
