"""The exact eps-dependent two-particle Schroedinger equation.

    i dpsi/dt = -(eps / 2 m1) d2psi/dx2 + U psi / eps - (1 / 2 m2) d2psi/dy2 + V psi

integrated by Strang splitting with the kinetic step in Fourier space.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BlowUp, ValidationError
from .numerics import Grid2D, integrate, spectral_derivative

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DimensionalParams:
    M1: float
    M2: float
    L1: float
    L2: float
    T_scale: float
    hbar: float
    U_dim: Callable | None = None
    V_dim: Callable | None = None

    def __post_init__(self):
        bad = [k for k in ("M1", "M2", "L1", "L2", "T_scale", "hbar") if not getattr(self, k) > 0]
        if bad:
            raise ValidationError([f"{k} must be positive" for k in bad])
        if self.M2 > self.M1:
            raise ValidationError("M2 must not exceed M1")


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless masses, small parameter and potentials ``U(x)``, ``V(x, y)``.

    The potentials are vectorised callables; ``None`` means identically zero.
    """

    m1: float = 1.0
    m2: float = 1.0
    epsilon: float = 1.0
    U: Callable | None = None
    V: Callable | None = None

    def __post_init__(self):
        problems = []
        if not self.m1 > 0:
            problems.append("m1 must be positive")
        if not self.m2 > 0:
            problems.append("m2 must be positive")
        if not 0 < self.epsilon <= 1:
            problems.append("epsilon must lie in (0, 1]")
        if problems:
            raise ValidationError(problems)

    def U_on(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x) if self.U is None else np.broadcast_to(self.U(x), x.shape).astype(float)

    def V_on(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.zeros_like(x) if self.V is None else np.broadcast_to(self.V(x, y), x.shape).astype(float)

    def with_epsilon(self, epsilon: float) -> "ModelParams":
        return ModelParams(self.m1, self.m2, epsilon, self.U, self.V)


def nondimensionalize(dp: DimensionalParams) -> ModelParams:
    eps = dp.M2 / dp.M1
    m1 = dp.M2 * dp.L1**2 / (dp.hbar * dp.T_scale)
    m2 = dp.M2 * dp.L2**2 / (dp.hbar * dp.T_scale)
    U = V = None
    if dp.U_dim is not None:
        U_dim, cu = dp.U_dim, dp.T_scale * dp.M2 / (dp.hbar * dp.M1)
        U = lambda x: cu * U_dim(dp.L1 * x)
    if dp.V_dim is not None:
        V_dim, cv = dp.V_dim, dp.T_scale / dp.hbar
        V = lambda x, y: cv * V_dim(dp.L1 * x, dp.L2 * y)
    return ModelParams(m1=m1, m2=m2, epsilon=eps, U=U, V=V)


@dataclass
class Trajectory:
    times: np.ndarray
    states: list

    def __len__(self):
        return len(self.times)

    def final(self):
        return self.states[-1]


class FullSolver:
    """Strang split-step propagator on a fixed grid and time step."""

    def __init__(self, grid: Grid2D, mp: ModelParams, dt: float):
        if not dt >= 0:
            raise ValidationError("dt must be non-negative")
        self.grid, self.mp, self.dt = grid, mp, dt
        X, Y = grid.mesh()
        eps = mp.epsilon
        self.potential = mp.U_on(X) / eps + mp.V_on(X, Y)
        if dt * np.max(np.abs(self.potential)) > np.pi:
            warnings.warn("dt * max|U/eps + V| exceeds pi; potential phase aliases", RuntimeWarning, stacklevel=2)
        KX, KY = np.meshgrid(grid.kx, grid.ky, indexing="ij")
        self.kinetic = eps * KX**2 / (2 * mp.m1) + KY**2 / (2 * mp.m2)
        self.half_v = np.exp(-0.5j * dt * self.potential)
        self.full_t = np.exp(-1j * dt * self.kinetic)

    def step(self, psi: np.ndarray) -> np.ndarray:
        if self.dt == 0:
            return psi
        psi = self.half_v * psi
        psi = np.fft.ifft2(self.full_t * np.fft.fft2(psi))
        return self.half_v * psi


def evolve_full(psi0: np.ndarray, grid: Grid2D, mp: ModelParams, dt: float, n_steps: int,
                stride: int | None = None, check_norm: bool = True) -> Trajectory:
    """Propagate ``psi0`` for ``n_steps`` steps, storing every ``stride``-th state.

    The initial and final states are always stored.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != grid.shape:
        raise ValidationError(f"psi0 shape {psi0.shape} does not match grid {grid.shape}")
    if check_norm and abs(integrate(np.abs(psi0) ** 2, grid) - 1) > 1e-10:
        raise ValidationError("psi0 must be normalised to within 1e-10")
    solver = FullSolver(grid, mp, dt)
    stride = stride or max(n_steps, 1)
    times, states = [0.0], [psi0.copy()]
    psi = psi0
    for n in range(1, n_steps + 1):
        psi = solver.step(psi)
        if n % stride == 0 or n == n_steps:
            if not np.all(np.isfinite(psi)):
                raise BlowUp(f"non-finite wave function at step {n}")
            times.append(n * dt)
            states.append(psi.copy())
    if n_steps > 0 and not np.all(np.isfinite(psi)):
        raise BlowUp("non-finite wave function")
    return Trajectory(np.array(times), states)


def norm(psi: np.ndarray, grid: Grid2D) -> float:
    return float(np.sqrt(integrate(np.abs(psi) ** 2, grid)))


def energy(psi: np.ndarray, grid: Grid2D, mp: ModelParams) -> float:
    """Expectation of the generator, with spectral gradients."""
    X, Y = grid.mesh()
    dpx = spectral_derivative(psi, grid.lx, axis=0)
    dpy = spectral_derivative(psi, grid.ly, axis=1)
    dens = np.abs(psi) ** 2
    e = (mp.epsilon / (2 * mp.m1)) * np.abs(dpx) ** 2 + np.abs(dpy) ** 2 / (2 * mp.m2)
    e = e + dens * (mp.U_on(X) / mp.epsilon + mp.V_on(X, Y))
    return float(integrate(e, grid) / integrate(dens, grid))
