"""Hydrodynamic vector fields of the limit system and of the Hall-Reginatto scheme.

States are held as ``(s, theta)`` with ``s = log sqrt(rho)``. In these
variables continuity reads ``ds/dt = -v . grad s - div(v) / 2`` and the quantum
potential is ``d2 sqrt(rho)/dy2 / sqrt(rho) = s_yy + s_y^2``, so no quotient by a
small amplitude ever appears. All spatial derivatives are fourth-order finite
differences (exact on quadratic data, such as Gaussians with quadratic phases).

``X_C`` and ``X_Q`` generate the limit system, ``X_HR`` the Hall-Reginatto
equations, and ``X_I = X_HR - X_C - X_Q`` is their difference.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cq_limit import rk4
from .errors import AmplitudeFloorBreached, BlowUp, ValidationError
from .full_qm import ModelParams, Trajectory
from .numerics import Grid2D, fd4_derivative, integrate, spectral_derivative
from .operators import AveragingKernel, apply_A, apply_B
from .polar import R_MIN

GENERATORS = ("XC", "XQ", "XI")


@dataclass(frozen=True)
class HydroState:
    s: np.ndarray          # log-amplitude, log sqrt(rho)
    theta: np.ndarray      # total non-local phase theta_A + theta_B
    kernel: AveragingKernel

    @property
    def grid(self) -> Grid2D:
        return self.kernel.grid

    @property
    def rho(self) -> np.ndarray:
        return np.exp(2 * self.s)

    @classmethod
    def from_density(cls, rho, theta, kernel, r_min: float = R_MIN) -> "HydroState":
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0):
            raise ValidationError("density must be non-negative")
        if np.any(rho < r_min**2):
            raise AmplitudeFloorBreached("density below r_min^2; log-amplitude undefined")
        return cls(0.5 * np.log(rho), np.asarray(theta, dtype=float), kernel)

    @classmethod
    def from_polar(cls, state) -> "HydroState":
        return cls.from_density(state.R**2, state.theta, state.kernel)

    def mass(self) -> float:
        return float(integrate(self.rho, self.grid))

    def validate(self, tol: float = 1e-8) -> None:
        problems = []
        if abs(self.mass() - 1) > tol:
            problems.append(f"mass {self.mass():.12g} differs from 1 by more than {tol:g}")
        if not np.all(np.isfinite(self.theta)) or not np.all(np.isfinite(self.s)):
            problems.append("state has non-finite entries")
        if problems:
            raise ValidationError(problems)


class Tangent(NamedTuple):
    drho: np.ndarray
    dtheta: np.ndarray


def _d(f, grid, axis, order=1):
    return fd4_derivative(f, grid.spacing(axis), axis, order)


def _log_parts(state: HydroState, mp: ModelParams):
    """Log-variable tangents of the three generators, keyed by name."""
    g, k = state.grid, state.kernel
    s, th = state.s, state.theta
    m1, m2 = mp.m1, mp.m2
    X, Y = g.mesh()
    tA, tB = apply_A(k, th), apply_B(k, th)
    ax, axx = _d(tA, g, 0), _d(tA, g, 0, 2)
    bx, bxx = _d(tB, g, 0), _d(tB, g, 0, 2)
    ty, tyy = _d(th, g, 1), _d(th, g, 1, 2)
    sx, sy, syy = _d(s, g, 0), _d(s, g, 1), _d(s, g, 1, 2)
    qp = (syy + sy**2) / (2 * m2)
    return {
        "XC": (-(ax / m1) * sx - axx / (2 * m1),
               -(ax**2 + 2 * ax * bx) / (2 * m1) - mp.U_on(X)),
        "XQ": (-(ty / m2) * sy - tyy / (2 * m2),
               apply_B(k, -ty**2 / (2 * m2) + qp) - mp.V_on(X, Y)),
        "XI": (-(bx / m1) * sx - bxx / (2 * m1),
               -bx**2 / (2 * m1) + apply_A(k, -ty**2 / (2 * m2) + qp)),
    }


def _to_tangent(state, ds, dth) -> Tangent:
    return Tangent(2 * state.rho * ds, dth)


def field_XC(state: HydroState, mp: ModelParams) -> Tangent:
    return _to_tangent(state, *_log_parts(state, mp)["XC"])


def field_XQ(state: HydroState, mp: ModelParams) -> Tangent:
    return _to_tangent(state, *_log_parts(state, mp)["XQ"])


def field_XI(state: HydroState, mp: ModelParams) -> Tangent:
    return _to_tangent(state, *_log_parts(state, mp)["XI"])


def field_XHR(state: HydroState, mp: ModelParams) -> Tangent:
    """The local Hall-Reginatto field, evaluated directly (not as a sum)."""
    g = state.grid
    s, th = state.s, state.theta
    X, Y = g.mesh()
    tx, txx = _d(th, g, 0), _d(th, g, 0, 2)
    ty, tyy = _d(th, g, 1), _d(th, g, 1, 2)
    sx, sy, syy = _d(s, g, 0), _d(s, g, 1), _d(s, g, 1, 2)
    ds = -(tx / mp.m1) * sx - txx / (2 * mp.m1) - (ty / mp.m2) * sy - tyy / (2 * mp.m2)
    dth = (-tx**2 / (2 * mp.m1) - ty**2 / (2 * mp.m2) + (syy + sy**2) / (2 * mp.m2)
           - mp.U_on(X) - mp.V_on(X, Y))
    return _to_tangent(state, ds, dth)


def _parse_generators(generators) -> tuple:
    if isinstance(generators, str):
        generators = (generators,)
    out = []
    for gname in generators:
        if gname == "XHR":
            out.extend(GENERATORS)
        elif gname in GENERATORS:
            out.append(gname)
        else:
            raise ValidationError(f"unknown generator {gname!r}")
    if not out:
        raise ValidationError("empty generator selection")
    return tuple(dict.fromkeys(out))


def hydro_rhs(state: HydroState, mp: ModelParams, generators) -> tuple:
    """Summed log-variable tangent ``(ds, dtheta)`` of the selected generators."""
    parts = _log_parts(state, mp)
    names = _parse_generators(generators)
    ds = sum(parts[n][0] for n in names)
    dth = sum(parts[n][1] for n in names)
    return ds, dth


def evolve_hydro(state0: HydroState, mp: ModelParams, generators, dt: float, n_steps: int,
                 stride: int | None = None) -> Trajectory:
    """Classic RK4 on the sum of the selected vector fields."""
    if dt < 0 or n_steps < 0:
        raise ValidationError("dt and n_steps must be non-negative")
    names = _parse_generators(generators)
    k = state0.kernel
    rhs = lambda s, th: hydro_rhs(HydroState(s, th, k), mp, names)
    stride = stride or max(n_steps, 1)
    cur = (state0.s, state0.theta)
    times, states = [0.0], [state0]
    for n in range(1, n_steps + 1):
        cur = rk4(rhs, cur, dt)
        if n % stride == 0 or n == n_steps:
            if not (np.all(np.isfinite(cur[0])) and np.all(np.isfinite(cur[1]))) or cur[0].max() > 50:
                raise BlowUp(f"hydrodynamic state blew up at step {n}")
            times.append(n * dt)
            states.append(HydroState(cur[0], cur[1], k))
    return Trajectory(np.array(times), states)


def flow_map(state: HydroState, mp: ModelParams, generators, t: float, dt: float) -> HydroState:
    """``F_t`` of the selected field, by RK4 with the step shrunk to divide ``t``."""
    if t == 0:
        return state
    n = max(1, int(np.ceil(abs(t) / dt - 1e-9)))
    return evolve_hydro(state, mp, generators, t / n, n).final()


def _diff(a: HydroState, b: HydroState) -> float:
    return float(max(np.abs(a.rho - b.rho).max(), np.abs(a.theta - b.theta).max()))


def check_flow_commutation(state0: HydroState, mp: ModelParams, t: float, s: float, dt: float,
                           first=("XC",), second=("XQ",)) -> dict:
    """Max-abs commutator of two flows, and the splitting defect of their sum.

    Returns ``commutator = |F_t^1 F_s^2 - F_s^2 F_t^1|`` and
    ``splitting = |F_t^{1+2} - F_t^1 F_t^2|`` over both ``(rho, theta)`` slots.
    """
    a = flow_map(flow_map(state0, mp, second, s, dt), mp, first, t, dt)
    b = flow_map(flow_map(state0, mp, first, t, dt), mp, second, s, dt)
    both = tuple(first) + tuple(second)
    c = flow_map(state0, mp, both, t, dt)
    d = flow_map(flow_map(state0, mp, second, t, dt), mp, first, t, dt)
    return {"commutator": _diff(a, b), "splitting": _diff(c, d)}


# ---------------------------------------------------------------------------
# Hall-Reginatto dynamics in wave form


class HRSolver:
    """Strang splitting for the Hall-Reginatto equations written for ``psi = sqrt(rho) e^{i theta}``.

        i dpsi/dt = -(1/2m1) psi_xx + (1/2m1) (|psi|_xx / |psi|) psi - (1/2m2) psi_yy + (U + V) psi

    The nonlinear term is a real potential, so each half-step rotates the
    phase exactly and preserves ``|psi|``. ``|psi|_xx`` is spectral; the quotient
    uses ``max(|psi|, r_min)``.
    """

    def __init__(self, grid: Grid2D, mp: ModelParams, dt: float, r_min: float = R_MIN):
        self.grid, self.mp, self.dt, self.r_min = grid, mp, dt, r_min
        X, Y = grid.mesh()
        self.potential = mp.U_on(X) + mp.V_on(X, Y)
        KX, KY = np.meshgrid(grid.kx, grid.ky, indexing="ij")
        self.full_t = np.exp(-1j * dt * (KX**2 / (2 * mp.m1) + KY**2 / (2 * mp.m2)))

    def _half(self, psi):
        amp = np.abs(psi)
        nq = spectral_derivative(amp, self.grid.lx, 0, 2) / (2 * self.mp.m1 * np.maximum(amp, self.r_min))
        return np.exp(-0.5j * self.dt * (self.potential + nq)) * psi

    def step(self, psi):
        psi = self._half(psi)
        psi = np.fft.ifft2(self.full_t * np.fft.fft2(psi))
        return self._half(psi)


def evolve_hr(psi0: np.ndarray, grid: Grid2D, mp: ModelParams, dt: float, n_steps: int,
              stride: int | None = None, r_min: float = R_MIN) -> Trajectory:
    solver = HRSolver(grid, mp, dt, r_min)
    stride = stride or max(n_steps, 1)
    psi = np.asarray(psi0, dtype=complex)
    times, states = [0.0], [psi.copy()]
    for n in range(1, n_steps + 1):
        psi = solver.step(psi)
        if n % stride == 0 or n == n_steps:
            if not np.all(np.isfinite(psi)):
                raise BlowUp(f"Hall-Reginatto wave blew up at step {n}")
            times.append(n * dt)
            states.append(psi.copy())
    return Trajectory(np.array(times), states)
