"""First-order corrections ``(mu, nu, omega)`` to the classical-quantum limit.

With ``theta_A^eps = theta_A + eps nu``, ``theta_B^eps = theta_B + eps omega`` and
``R^eps = R + eps mu`` the exact wave function is, up to O(eps^2),

    psi = exp(i (theta_A / eps + nu + theta_B + eps omega)) (R + eps mu).

The stepper integrates the correction in complex form. Writing
``psi^eps = exp(i theta_A / eps) W`` gives ``dW/dt = L W + (i eps / 2 m1) d2W/dx2``
with ``L`` the generator of the local limit system, so ``W = W0 + eps W1 + ...``
with ``dW1/dt = L W1 + (i / 2 m1) d2W0/dx2``. The polar corrections follow from
``W1 / W0 = mu / R + i (omega + O(eps))`` and ``nu = A arg W0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cq_limit import LimitSolution, rk4, wave_rhs
from .errors import AmplitudeFloorBreached, BlowUp, ValidationError
from .full_qm import ModelParams
from .numerics import Grid2D, fd4_derivative, spectral_derivative
from .operators import AveragingKernel, apply_B, average
from .polar import R_MIN, PolarState, support_mask, unwrap_phase


@dataclass(frozen=True)
class CorrectionState:
    mu: np.ndarray       # (nx, ny)
    nu: np.ndarray       # (nx,)
    omega: np.ndarray    # (nx, ny)

    @staticmethod
    def zeros(grid: Grid2D) -> "CorrectionState":
        return CorrectionState(np.zeros(grid.shape), np.zeros(grid.nx), np.zeros(grid.shape))

    def scaled(self, c: float) -> "CorrectionState":
        return CorrectionState(c * self.mu, c * self.nu, c * self.omega)


@dataclass
class CorrectionTrajectory:
    times: np.ndarray
    zeroth: list          # PolarState per snapshot (co-integrated)
    corrections: list     # CorrectionState per snapshot
    constraint_drift: float = 0.0


def _ratio(W1, W0, floor=1e-300):
    return W1 * np.conj(W0) / np.maximum(np.abs(W0) ** 2, floor)


def _align(nu, ref, weight):
    """Remove the 2 pi ambiguity of a freshly unwrapped phase average against ``ref``."""
    if ref is None:
        return nu
    shift = np.average(ref - nu, weights=weight)
    return nu + 2 * np.pi * np.round(shift / (2 * np.pi))


def _extract(theta_A, W0, W1, kernel, r_min, nu_ref=None):
    tilde = unwrap_phase(W0, r_min)
    R = np.abs(W0)
    nu = _align(average(kernel, tilde), nu_ref, R.sum(axis=1) + 1e-300)
    q = _ratio(W1, W0)
    zeroth = PolarState(R, np.asarray(theta_A, dtype=float), apply_B(kernel, tilde), kernel)
    corr = CorrectionState(R * q.real, nu, apply_B(kernel, q.imag))
    return zeroth, corr


def evolve_correction(zeroth, corr0: CorrectionState | None, mp: ModelParams, dt: float, n_steps: int,
                      stride: int | None = None, r_min: float = R_MIN) -> CorrectionTrajectory:
    """Integrate the zeroth-order local system and its first-order correction together.

    ``zeroth`` is the initial :class:`PolarState` or a :class:`LimitSolution`
    whose first snapshot supplies it. Coefficients are therefore available at
    every RK4 stage without interpolation.
    """
    state0 = zeroth.states[0] if isinstance(zeroth, LimitSolution) else zeroth
    grid, kernel = state0.grid, state0.kernel
    if not dt > 0 or n_steps < 1:
        raise ValidationError("dt must be positive and n_steps >= 1")
    if state0.R.max() < r_min:
        raise AmplitudeFloorBreached("zeroth-order amplitude is below the floor everywhere")
    corr0 = corr0 or CorrectionState.zeros(grid)
    stride = stride or n_steps
    X, Y = grid.mesh()
    pot = mp.V_on(X, Y)
    c = 0.5j / mp.m1

    def rhs(a, w0, w1):
        da, dw0 = wave_rhs(a, w0, grid, mp, pot)
        _, dw1 = wave_rhs(a, w1, grid, mp, pot)
        return da, dw0, dw1 + c * spectral_derivative(w0, grid.lx, 0, 2)

    phase0 = np.exp(1j * (corr0.nu[:, None] + state0.theta_B))
    cur = (state0.theta_A.astype(float), phase0 * state0.R, phase0 * (corr0.mu + 1j * corr0.omega * state0.R))
    z, k = _extract(cur[0], cur[1], cur[2], kernel, r_min, corr0.nu)
    times, zs, cs = [0.0], [z], [k]
    scale = 1e6 * max(1.0, np.abs(cur[1]).max(), np.abs(cur[2]).max())
    for n in range(1, n_steps + 1):
        cur = rk4(rhs, cur, dt)
        if n % stride == 0 or n == n_steps:
            if not all(np.all(np.isfinite(a)) and np.abs(a).max() < scale for a in cur):
                raise BlowUp(f"correction blew up at step {n}")
            z, k = _extract(cur[0], cur[1], cur[2], kernel, r_min, cs[-1].nu)
            times.append(n * dt)
            zs.append(z)
            cs.append(k)
    drift = max(float(np.abs(average(kernel, k.omega)).max()) for k in cs)
    return CorrectionTrajectory(np.array(times), zs, cs, drift)


def corrected_reconstruct(state: PolarState, corr: CorrectionState, epsilon: float,
                          r_min: float = R_MIN, support_rel: float = 1e-3) -> np.ndarray:
    """``exp(i (theta_A / eps + nu + theta_B + eps omega)) (R + eps mu)``.

    The corrected amplitude must stay above ``r_min / 2`` on the support
    ``R >= support_rel * max R``. In the far tails the expansion is not
    uniform and the amplitude is clipped at zero instead.
    """
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    amp = state.R + epsilon * corr.mu
    live = support_mask(state.R, support_rel)
    if np.any(amp[live] < 0.5 * r_min):
        raise AmplitudeFloorBreached("corrected amplitude R + eps mu is not positive on the support")
    phase = state.theta_A[:, None] / epsilon + corr.nu[:, None] + state.theta_B + epsilon * corr.omega
    return np.exp(1j * phase) * np.maximum(amp, 0.0)


def corrected_polar(state: PolarState, corr: CorrectionState, epsilon: float):
    """First-order predictions ``(R + eps mu, theta_A + eps nu, theta_B + eps omega)``."""
    return state.R + epsilon * corr.mu, state.theta_A + epsilon * corr.nu, state.theta_B + epsilon * corr.omega


def correction_rhs(state: PolarState, corr: CorrectionState, mp: ModelParams, r_min: float = R_MIN):
    """Time derivatives of ``(mu, nu, omega)`` from the polar first-order system.

    Phases are differentiated with fourth-order stencils, amplitudes spectrally.
    ``nu`` is driven by the averaged zeroth-order quantum-phase source,
    including the coupling ``-A V``.
    """
    grid, kernel = state.grid, state.kernel
    X, Y = grid.mesh()
    m1, m2 = mp.m1, mp.m2
    R, tb = state.R, state.theta_B
    mu, nu, om = corr.mu, corr.nu, corr.omega
    sx = lambda f, o=1: spectral_derivative(f, grid.lx, 0, o)
    sy = lambda f, o=1: spectral_derivative(f, grid.ly, 1, o)
    px = lambda f, o=1: fd4_derivative(f, grid.dx, 0, o)
    py = lambda f, o=1: fd4_derivative(f, grid.dy, 1, o)
    v1 = (px(state.theta_A) / m1)[:, None]
    qA = px(state.theta_A, 2)[:, None]
    nux, nuxx = px(nu)[:, None], px(nu, 2)[:, None]
    Rs = np.maximum(R, r_min)
    Rx, Ry, Ryy, Rxx = sx(R), sy(R), sy(R, 2), sx(R, 2)
    bx, bxx, by, byy = px(tb), px(tb, 2), py(tb), py(tb, 2)
    wy, wyy = py(om), py(om, 2)
    dmu = (-v1 * sx(mu) - (nux + bx) * Rx / m1 - qA * mu / (2 * m1) - (nuxx + bxx) * R / (2 * m1)
           - (by * sy(mu) + wy * Ry) / m2 - (byy * mu + wyy * R) / (2 * m2))
    source = -by**2 / (2 * m2) + Ryy / (2 * m2 * Rs) - mp.V_on(X, Y)
    dnu = -v1[:, 0] * px(nu) + average(kernel, source)
    dq = (sy(mu, 2) - mu * Ryy / Rs) / (2 * m2 * Rs)
    dom = (-v1 * px(om) - nux * bx / m1
           + apply_B(kernel, -by * wy / m2 + dq + Rxx / (2 * m1 * Rs) - bx**2 / (2 * m1)))
    return dmu, dnu, dom
