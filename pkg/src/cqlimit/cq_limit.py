"""Solvers for the classical-quantum limit system.

The production route is Lagrangian: the classical phase is carried by the
Hamiltonian flow of ``H1 = p^2 / 2 m1 + U``, the quantum amplitude by a family
of 1-particle Schroedinger equations, one per Lagrangian label, with potential
``V(F(t, x), y)``. The result is mapped back to Eulerian ``(R, theta_A, theta_B)``.

``evolve_limit_direct`` integrates the local Eulerian system directly and is
kept as an independent oracle.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AmplitudeFloorBreached, BlowUp, CausticFormed, FlowEscape, ValidationError
from .full_qm import ModelParams
from .numerics import Grid2D, fd4_derivative, fourier_interpolate, interpolate_monotone, spectral_derivative
from .operators import AveragingKernel, apply_B, average
from .polar import R_MIN, PolarState, unwrap_phase

CAUSTIC_TOL = 1e-3


def gradient(f: Callable) -> Callable:
    """Derivative of a real analytic vectorised callable by the complex-step rule.

    Callables that reject complex input, or silently drop the imaginary part,
    are differentiated by central differences instead.
    """
    h = 1e-30

    def df(x):
        x = np.asarray(x, dtype=float)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", np.exceptions.ComplexWarning)
                return np.imag(f(x + 1j * h)) / h + 0.0 * x
        except (TypeError, ValueError, np.exceptions.ComplexWarning):
            d = 1e-6 * np.maximum(1.0, np.abs(x))
            return (f(x + d) - f(x - d)) / (2 * d)

    return df


@dataclass
class ClassicalFlow:
    t_grid: np.ndarray
    labels: np.ndarray
    X: np.ndarray          # (nt, nx) positions; F(t, x) = X
    P: np.ndarray          # (nt, nx) momenta
    dF: np.ndarray         # (nt, nx) Jacobian of the Lagrangian map
    m1: float
    U: Callable
    S: np.ndarray | None = None   # (nt, nx) action accumulated along each trajectory

    @property
    def F(self) -> np.ndarray:
        return self.X

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.t_grid - t)))
        if abs(self.t_grid[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError(f"time {t} is not on the flow's time grid")
        return i

    def energy(self) -> np.ndarray:
        return self.P**2 / (2 * self.m1) + self.U(self.X)


def _U_callable(U):
    if U is None:
        return lambda x: np.zeros(np.shape(x))
    return U


def hamiltonian_flow(U, theta_A0: np.ndarray, m1: float, t_grid: np.ndarray, x: np.ndarray,
                     p0: np.ndarray | None = None, dU: Callable | None = None,
                     substeps: int = 1, box: tuple[float, float] | None = None) -> ClassicalFlow:
    """Velocity-Verlet trajectories launched from every label with ``p = d theta_A0/dx``."""
    U = _U_callable(U)
    dU = dU or gradient(U)
    x = np.asarray(x, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if p0 is None:
        p0 = fd4_derivative(theta_A0, x[1] - x[0])
    if box is None:
        h = x[1] - x[0]
        box = (x[0], x[-1] + h)
    width = box[1] - box[0]
    lo, hi = box[0] - 0.5 * width, box[1] + 0.5 * width
    nt = len(t_grid)
    Xs, Ps = np.empty((nt, len(x))), np.empty((nt, len(x)))
    X, P = x.copy(), np.asarray(p0, dtype=float).copy()
    Ss = np.zeros((nt, len(x)))
    Xs[0], Ps[0] = X, P
    force = -dU(X)
    lag = P**2 / (2 * m1) - U(X)
    S = np.zeros_like(X)
    for n in range(1, nt):
        h = (t_grid[n] - t_grid[n - 1]) / substeps
        for _ in range(substeps):
            P = P + 0.5 * h * force
            X = X + h * P / m1
            force = -dU(X)
            P = P + 0.5 * h * force
            lag_new = P**2 / (2 * m1) - U(X)
            S = S + 0.5 * h * (lag + lag_new)
            lag = lag_new
        if not np.all(np.isfinite(X)):
            raise BlowUp(f"non-finite trajectory at t = {t_grid[n]}")
        if X.min() < lo or X.max() > hi:
            raise FlowEscape(f"trajectory left the box at t = {t_grid[n]}")
        Xs[n], Ps[n], Ss[n] = X, P, S
    dF = fd4_derivative(Xs, x[1] - x[0], axis=1)
    dF[0] = 1.0
    return ClassicalFlow(t_grid, x, Xs, Ps, dF, m1, U, Ss)


def check_caustic(flow: ClassicalFlow, tol: float = CAUSTIC_TOL):
    """First time at which ``min_x dF`` reaches ``tol`` (linearly interpolated), else None."""
    mins = flow.dF.min(axis=1)
    hit = np.nonzero(mins <= tol)[0]
    if hit.size == 0:
        return None
    i = int(hit[0])
    if i == 0:
        return float(flow.t_grid[0])
    t0, t1, m0, m1 = flow.t_grid[i - 1], flow.t_grid[i], mins[i - 1], mins[i]
    return float(t0 + (m0 - tol) / (m0 - m1) * (t1 - t0))


def _require_caustic_free(flow, index, tol):
    if flow.dF[index].min() <= tol:
        raise CausticFormed(f"caustic before t = {flow.t_grid[index]}")


def invert_flow(flow: ClassicalFlow, t: float, query: np.ndarray | None = None,
                tol: float = CAUSTIC_TOL, newton_steps: int = 3) -> np.ndarray:
    """Labels ``G(t, x)`` with ``F(t, G) = x`` at the query points.

    Queries outside the image ``[F(t, x_0), F(t, x_N)]`` are extrapolated
    linearly with the end slopes, so they map outside the label box.
    """
    n = flow.index_of(t)
    _require_caustic_free(flow, n, tol)
    query = flow.labels if query is None else np.asarray(query, dtype=float)
    Ft, labels = flow.X[n], flow.labels
    G = interpolate_monotone(Ft, labels, query)
    spline = CubicSpline(labels, Ft)
    dspline = spline.derivative()
    lo, hi = query < Ft[0], query > Ft[-1]
    inner = ~(lo | hi)
    for _ in range(newton_steps):
        G[inner] = G[inner] - (spline(G[inner]) - query[inner]) / dspline(G[inner])
    G[lo] = labels[0] + (query[lo] - Ft[0]) / dspline(labels[0])
    G[hi] = labels[-1] + (query[hi] - Ft[-1]) / dspline(labels[-1])
    return G


def action(flow: ClassicalFlow) -> np.ndarray:
    """Cumulative ``int_0^t (P^2 / 2 m1 - U(X)) dtau`` per label (trapezoid rule).

    Uses the action accumulated on the integrator's substeps when available.
    """
    if flow.S is not None:
        return flow.S
    lag = flow.P**2 / (2 * flow.m1) - flow.U(flow.X)
    dt = np.diff(flow.t_grid)[:, None]
    out = np.zeros_like(lag)
    out[1:] = np.cumsum(0.5 * dt * (lag[1:] + lag[:-1]), axis=0)
    return out


def theta_A_evolve(flow: ClassicalFlow, theta_A0: np.ndarray, indices=None, query=None,
                   tol: float = CAUSTIC_TOL) -> np.ndarray:
    """Classical phase from the characteristics formula at the requested time indices.

    ``theta_A(t, x) = theta_A0(G) + S(t, G)`` with ``S`` the action along the
    characteristic launched from label ``G(t, x)``. Returns ``(len(indices), nq)``.
    """
    indices = range(len(flow.t_grid)) if indices is None else indices
    query = flow.labels if query is None else np.asarray(query, dtype=float)
    S = action(flow)
    out = []
    for n in indices:
        _require_caustic_free(flow, n, tol)
        G = invert_flow(flow, flow.t_grid[n], query, tol)
        out.append(CubicSpline(flow.labels, theta_A0 + S[n])(G))
    return np.array(out)


def evolve_quantum_family(psi_tilde0: np.ndarray, V, flow: ClassicalFlow, m2: float, grid: Grid2D,
                          stride: int = 1, events: dict | None = None) -> list:
    """Independent 1D split-step solves in y, one per Lagrangian label.

    Each step uses ``V(F(t_n, x), y)`` for the first half-kick and
    ``V(F(t_{n+1}, x), y)`` for the second. ``events`` maps a step index to a
    callable applied to the whole family after that step (used for mid-run
    measurements). Returns snapshots at every ``stride``-th stored flow time,
    always including the first and last.
    """
    Vf = V if V is not None else (lambda x, y: np.zeros(np.broadcast(x, y).shape))
    events = events or {}
    psi = np.asarray(psi_tilde0, dtype=complex).copy()
    if 0 in events:
        psi = events[0](psi)
    y = grid.y[None, :]
    ky2 = grid.ky**2 / (2 * m2)
    nt = len(flow.t_grid)
    snaps = [psi.copy()]
    v_now = Vf(flow.X[0][:, None], y)
    for n in range(1, nt):
        dt = flow.t_grid[n] - flow.t_grid[n - 1]
        v_next = Vf(flow.X[n][:, None], y)
        psi = np.exp(-0.5j * dt * v_now) * psi
        psi = np.fft.ifft(np.exp(-1j * dt * ky2)[None, :] * np.fft.fft(psi, axis=1), axis=1)
        psi = np.exp(-0.5j * dt * v_next) * psi
        v_now = v_next
        if n in events:
            psi = events[n](psi)
        if n % stride == 0 or n == nt - 1:
            if not np.all(np.isfinite(psi)):
                raise BlowUp(f"non-finite quantum family at step {n}")
            snaps.append(psi.copy())
    return snaps


def snapshot_indices(nt: int, stride: int) -> list[int]:
    idx = list(range(0, nt, stride))
    if idx[-1] != nt - 1:
        idx.append(nt - 1)
    return idx


@dataclass
class LimitSolution:
    times: np.ndarray
    states: list                    # PolarState per snapshot
    waves: list                     # local wave exp(i theta~_B) R per snapshot
    flow: ClassicalFlow | None = None
    caustic_time: float | None = None
    meta: dict = field(default_factory=dict)


def lagrangian_to_eulerian(flow: ClassicalFlow, index: int, family_slice: np.ndarray, grid: Grid2D,
                           tol: float = CAUSTIC_TOL) -> np.ndarray:
    """``psi~(t, G(t, x), y) / sqrt(dF(t, G))`` on the Eulerian grid; zero where G leaves the label box."""
    G = invert_flow(flow, flow.t_grid[index], grid.x, tol)
    labels = flow.labels
    inside = (G >= labels[0]) & (G <= labels[-1])
    out = np.zeros(grid.shape, dtype=complex)
    if inside.any():
        vals = fourier_interpolate(family_slice, grid.x_min, grid.lx, G[inside])
        dFG = CubicSpline(labels, flow.dF[index])(G[inside])
        out[inside] = vals / np.sqrt(dFG)[:, None]
    return out


def polar_from_wave(wave: np.ndarray, theta_A: np.ndarray, kernel: AveragingKernel,
                    r_min: float = R_MIN) -> PolarState:
    """Eulerian polar state from the local wave ``exp(i theta~_B) R``; ``theta_B = B theta~_B``."""
    tilde = unwrap_phase(wave, r_min)
    return PolarState(R=np.abs(wave), theta_A=np.asarray(theta_A, dtype=float),
                      theta_B=apply_B(kernel, tilde), kernel=kernel)


def assemble_limit_solution(flow: ClassicalFlow, theta_A: np.ndarray, family: list, indices: list,
                            kernel: AveragingKernel, grid: Grid2D, r_min: float = R_MIN,
                            tol: float = CAUSTIC_TOL) -> LimitSolution:
    """Map Lagrangian data at the listed flow indices back to Eulerian polar states."""
    states, waves = [], []
    for k, n in enumerate(indices):
        wave = lagrangian_to_eulerian(flow, n, family[k], grid, tol)
        states.append(polar_from_wave(wave, theta_A[k], kernel, r_min))
        waves.append(wave)
    return LimitSolution(flow.t_grid[list(indices)], states, waves, flow, check_caustic(flow, tol))


def solve_limit(state0: PolarState, mp: ModelParams, dt: float, n_steps: int, stride: int | None = None,
                r_min: float = R_MIN, tol: float = CAUSTIC_TOL, events: dict | None = None,
                dU: Callable | None = None, substeps: int = 4) -> LimitSolution:
    """Full Lagrangian pipeline from an Eulerian initial polar state."""
    grid, kernel = state0.grid, state0.kernel
    if not dt > 0 or n_steps < 1:
        raise ValidationError("dt must be positive and n_steps >= 1")
    stride = stride or n_steps
    t_grid = dt * np.arange(n_steps + 1)
    flow = hamiltonian_flow(mp.U, state0.theta_A, mp.m1, t_grid, grid.x, dU=dU,
                            substeps=substeps, box=(grid.x_min, grid.x_max))
    tc = check_caustic(flow, tol)
    if tc is not None:
        raise CausticFormed(f"caustic at t = {tc:.6g} before t_final = {t_grid[-1]:.6g}")
    psi_tilde0 = np.exp(1j * state0.theta_B) * state0.R
    family = evolve_quantum_family(psi_tilde0, mp.V, flow, mp.m2, grid, stride, events)
    indices = snapshot_indices(n_steps + 1, stride)
    theta_A = theta_A_evolve(flow, state0.theta_A, indices, grid.x, tol)
    sol = assemble_limit_solution(flow, theta_A, family, indices, kernel, grid, r_min, tol)
    sol.meta["family"] = family
    return sol


# ---------------------------------------------------------------------------
# Eulerian oracle


def local_system_rhs(R, theta_A, theta_tB, grid: Grid2D, mp: ModelParams, r_min: float = R_MIN):
    """Right-hand side of the local system in amplitude/phase variables.

    Phases use fourth-order differences (they need not be periodic); the
    amplitude uses spectral derivatives. The quantum-potential quotient divides
    by ``max(R, r_min)``.
    """
    X, Y = grid.mesh()
    p = fd4_derivative(theta_A, grid.dx)
    q = fd4_derivative(theta_A, grid.dx, order=2)
    Rx = spectral_derivative(R, grid.lx, 0)
    Ry = spectral_derivative(R, grid.ly, 1)
    Ryy = spectral_derivative(R, grid.ly, 1, 2)
    bx = fd4_derivative(theta_tB, grid.dx, 0)
    by = fd4_derivative(theta_tB, grid.dy, 1)
    byy = fd4_derivative(theta_tB, grid.dy, 1, 2)
    m1, m2 = mp.m1, mp.m2
    dR = -(p[:, None] / m1) * Rx - (q[:, None] / (2 * m1)) * R - by * Ry / m2 - byy * R / (2 * m2)
    dA = -p**2 / (2 * m1) - mp.U_on(grid.x)
    dB = (-(p[:, None] / m1) * bx - by**2 / (2 * m2) + Ryy / (2 * m2 * np.maximum(R, r_min))
          - mp.V_on(X, Y))
    return dR, dA, dB


def wave_rhs(theta_A, W, grid: Grid2D, mp: ModelParams, potential=None):
    """Local system written for ``W = exp(i theta~_B) R``.

    ``dW/dt = -v1 dW/dx - (d2 theta_A/dx2 / 2 m1) W + (i / 2 m2) d2W/dy2 - i V W``;
    algebraically identical to the amplitude/phase form but free of quotients.
    """
    p = fd4_derivative(theta_A, grid.dx)
    q = fd4_derivative(theta_A, grid.dx, order=2)
    if potential is None:
        X, Y = grid.mesh()
        potential = mp.V_on(X, Y)
    dA = -p**2 / (2 * mp.m1) - mp.U_on(grid.x)
    dW = (-(p[:, None] / mp.m1) * spectral_derivative(W, grid.lx, 0)
          - (q[:, None] / (2 * mp.m1)) * W
          + (0.5j / mp.m2) * spectral_derivative(W, grid.ly, 1, 2)
          - 1j * potential * W)
    return dA, dW


def rk4(rhs, state, dt):
    k1 = rhs(*state)
    k2 = rhs(*[s + 0.5 * dt * k for s, k in zip(state, k1)])
    k3 = rhs(*[s + 0.5 * dt * k for s, k in zip(state, k2)])
    k4 = rhs(*[s + dt * k for s, k in zip(state, k3)])
    return tuple(s + dt / 6 * (a + 2 * b + 2 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4))


def _check_finite(arrays, n, scale):
    for a in arrays:
        if not np.all(np.isfinite(a)) or np.max(np.abs(a)) > scale:
            raise BlowUp(f"solution blew up at step {n}")


def evolve_limit_direct(state0: PolarState, mp: ModelParams, dt: float, n_steps: int,
                        stride: int | None = None, form: str = "wave", r_min: float = R_MIN) -> LimitSolution:
    """Classic RK4 on the local Eulerian system (oracle for the Lagrangian route).

    ``form="wave"`` integrates the quotient-free complex form; ``form="madelung"``
    integrates ``(R, theta_A, theta~_B)`` literally and requires ``R >= r_min``.
    """
    grid, kernel = state0.grid, state0.kernel
    stride = stride or n_steps
    times, states, waves = [0.0], [state0], [np.exp(1j * state0.theta_B) * state0.R]
    if form == "wave":
        X, Y = grid.mesh()
        pot = mp.V_on(X, Y)
        rhs = lambda a, w: wave_rhs(a, w, grid, mp, pot)
        cur = (state0.theta_A.astype(float), waves[0])
        scale = 1e6 * max(1.0, np.max(np.abs(waves[0])))
        for n in range(1, n_steps + 1):
            cur = rk4(rhs, cur, dt)
            if n % stride == 0 or n == n_steps:
                _check_finite(cur, n, scale)
                times.append(n * dt)
                waves.append(cur[1])
                states.append(polar_from_wave(cur[1], cur[0], kernel, r_min))
    elif form == "madelung":
        if state0.R.min() < r_min:
            raise AmplitudeFloorBreached("initial amplitude below the floor")
        rhs = lambda r, a, b: local_system_rhs(r, a, b, grid, mp, r_min)
        cur = (state0.R, state0.theta_A.astype(float), state0.theta_B)
        scale = 1e8
        for n in range(1, n_steps + 1):
            cur = rk4(rhs, cur, dt)
            if cur[0].min() < r_min:
                raise AmplitudeFloorBreached(f"amplitude fell below {r_min:g} at t = {n * dt:.6g}")
            if n % stride == 0 or n == n_steps:
                _check_finite(cur, n, scale)
                times.append(n * dt)
                R, a, b = cur
                states.append(PolarState(R, a, apply_B(kernel, b), kernel))
                waves.append(np.exp(1j * b) * R)
    else:
        raise ValidationError(f"unknown form {form!r}")
    return LimitSolution(np.array(times), states, waves)
