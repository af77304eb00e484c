"""Marginals, no-backreaction residual, eps-convergence, signalling and kernel equivalence."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import cq_limit, first_order
from .errors import CausticFormed, ValidationError
from .full_qm import ModelParams, evolve_full
from .hybrid_hr import evolve_hr
from .numerics import Grid2D, fd4_derivative, integrate, spectral_derivative
from .operators import AveragingKernel, apply_A, apply_B, average, transform_T
from .polar import R_MIN, PolarState, decompose, reconstruct, support_mask, unwrap_phase

log = logging.getLogger(__name__)


def marginal_rho1(rho: np.ndarray, grid: Grid2D) -> np.ndarray:
    """``rho1(x) = int rho(x, y) dy``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValidationError("density must be non-negative")
    return integrate(rho, grid, axes=1)


def _l1(f, grid):
    return float(np.sum(np.abs(f)) * grid.dx)


# ---------------------------------------------------------------------------
# closed classical subsystem


def evolve_closed_classical(rho1_0, theta_A0, grid: Grid2D, mp: ModelParams, dt: float, n_steps: int,
                            stride: int | None = None):
    """RK4 for ``d rho1/dt = -d(v1 rho1)/dx`` and the Hamilton-Jacobi equation.

    ``rho1`` is differentiated spectrally, ``theta_A`` with fourth-order stencils.
    Returns ``(times, rho1 snapshots, theta_A snapshots)``.
    """
    U = mp.U_on(grid.x)

    def rhs(r, a):
        v = fd4_derivative(a, grid.dx) / mp.m1
        return -spectral_derivative(v * r, grid.lx), -0.5 * mp.m1 * v**2 - U

    stride = stride or n_steps
    cur = (np.asarray(rho1_0, dtype=float), np.asarray(theta_A0, dtype=float))
    times, rs, As = [0.0], [cur[0]], [cur[1]]
    for n in range(1, n_steps + 1):
        cur = cq_limit.rk4(rhs, cur, dt)
        if n % stride == 0 or n == n_steps:
            times.append(n * dt)
            rs.append(cur[0])
            As.append(cur[1])
    return np.array(times), rs, As


def closed_system_residual(times, rho1s, theta_As, grid, mp, dt, support_rel=1e-3,
                           branch_free: bool = False) -> float:
    """Max over snapshots of ``|rho1 - rho1_closed|_1 + max|theta_A - theta_A_closed|``.

    The closed system starts from the first snapshot and is sampled at the
    others; the phase comparison is restricted to the support of ``rho1``.
    With ``branch_free`` each phase snapshot is first moved by the multiple of
    2 pi that best matches the closed phase (phases read off a wave function).
    """
    steps = np.rint(np.asarray(times) / dt).astype(int)
    if np.any(np.abs(steps * dt - times) > 1e-9):
        raise ValidationError("snapshot times are not multiples of dt")
    stride = int(np.gcd.reduce(np.diff(steps))) if len(steps) > 1 else 1
    ct, crs, cAs = evolve_closed_classical(rho1s[0], theta_As[0], grid, mp, dt, int(steps[-1]), stride)
    lookup = {int(round(t / dt)): i for i, t in enumerate(ct)}
    worst = 0.0
    for n, r, a in zip(steps, rho1s, theta_As):
        i = lookup[int(n)]
        sup = r >= support_rel * r.max()
        da = a - cAs[i]
        if branch_free:
            da = da - 2 * np.pi * np.round(np.average(da[sup], weights=r[sup]) / (2 * np.pi))
        d = _l1(r - crs[i], grid) + float(np.abs(da)[sup].max())
        worst = max(worst, d)
    return worst


def backreaction_residual(sol: "cq_limit.LimitSolution", mp: ModelParams, dt: float,
                          support_rel: float = 1e-3) -> float:
    """Closed classical subsystem vs the classical content of a 2D limit solution."""
    if sol.caustic_time is not None and sol.caustic_time <= sol.times[-1]:
        raise CausticFormed(f"caustic at t = {sol.caustic_time}")
    grid = sol.states[0].grid
    rho1s = [marginal_rho1(s.R**2, grid) for s in sol.states]
    return closed_system_residual(sol.times, rho1s, [s.theta_A for s in sol.states], grid, mp, dt, support_rel)


def backreaction_residual_hydro(traj, mp: ModelParams, dt: float, support_rel: float = 1e-3) -> float:
    """Same comparison for a hydrodynamic trajectory; the classical phase is ``A theta``."""
    states = traj.states
    grid = states[0].grid
    rho1s = [marginal_rho1(s.rho, grid) for s in states]
    return closed_system_residual(traj.times, rho1s, [average(s.kernel, s.theta) for s in states],
                                  grid, mp, dt, support_rel)


def backreaction_residual_hr(traj, kernel: AveragingKernel, mp: ModelParams, dt: float,
                             support_rel: float = 1e-3) -> float:
    """Same comparison for a Hall-Reginatto wave trajectory (see :func:`hybrid_hr.evolve_hr`)."""
    grid = kernel.grid
    rho1s = [marginal_rho1(np.abs(p) ** 2, grid) for p in traj.states]
    thetas = [average(kernel, unwrap_phase(p)) for p in traj.states]
    return closed_system_residual(traj.times, rho1s, thetas, grid, mp, dt, support_rel, branch_free=True)


# ---------------------------------------------------------------------------
# eps-convergence


def projective_error(psi1: np.ndarray, psi2: np.ndarray) -> float:
    """``min_{|c| = 1} max |psi1 - c psi2|`` with ``c`` from the overlap phase."""
    ov = np.vdot(psi2, psi1)
    c = ov / abs(ov) if ov != 0 else 1.0
    return float(np.abs(psi1 - c * psi2).max())


def polar_errors(exact: PolarState, R, theta_A, theta_B, support_rel: float = 1e-3) -> tuple:
    """Max-abs deviations of ``(R, theta_A, theta_B)``, phases weighted by ``R / max R``.

    The classical phase is compared after removing its density-weighted mean
    offset, which is the polar image of a global phase factor.
    """
    w = R / R.max()
    sup = support_mask(R, support_rel)
    dA = np.broadcast_to((exact.theta_A - theta_A)[:, None], R.shape)
    dA = dA - np.average(dA, weights=w**2)
    return (float(np.abs(exact.R - R).max()),
            float((w * np.abs(dA))[sup].max()),
            float((w * np.abs(exact.theta_B - theta_B))[sup].max()))


def loglog_fit(eps, errs) -> tuple[float, float]:
    """Least-squares slope of ``log err`` on ``log eps`` and the RMS residual."""
    x, y = np.log(eps), np.log(errs)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(res**2)))


@dataclass
class ConvergenceReport:
    epsilons: list
    errors_zeroth: list
    errors_first: list
    slope_zeroth: float
    slope_first: float
    residual_zeroth: float
    residual_first: float
    components_zeroth: list = field(default_factory=list)
    components_first: list = field(default_factory=list)
    psi_errors_zeroth: list = field(default_factory=list)
    psi_errors_first: list = field(default_factory=list)


def convergence_study(state0: PolarState, mp: ModelParams, epsilons, t_final: float, dt_full: float,
                      dt_limit: float, support_rel: float = 1e-3) -> ConvergenceReport:
    """Compare the exact solver with the limit and first-order predictions at ``t_final``.

    For each eps the exact run starts from ``reconstruct(state0, eps)`` (so the
    initial correction vanishes) and is decomposed with the same kernel.
    Errors are the largest of the three polar components; see
    :func:`polar_errors`. Wave-function errors are reported alongside.
    """
    eps = [float(e) for e in epsilons]
    if any(not 0 < e <= 0.5 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("epsilons must lie in (0, 0.5] and be strictly decreasing")
    n_lim = int(round(t_final / dt_limit))
    n_full = int(round(t_final / dt_full))
    ct = first_order.evolve_correction(state0, None, mp, dt_limit, n_lim)
    z, corr = ct.zeroth[-1], ct.corrections[-1]
    rep = ConvergenceReport(eps, [], [], 0, 0, 0, 0)
    for e in eps:
        m = mp.with_epsilon(e)
        psi = evolve_full(reconstruct(state0, e), state0.grid, m, dt_full, n_full).final()
        ex = decompose(psi, e, state0.kernel)
        c0 = polar_errors(ex, z.R, z.theta_A, z.theta_B, support_rel)
        c1 = polar_errors(ex, *first_order.corrected_polar(z, corr, e), support_rel)
        rep.components_zeroth.append(c0)
        rep.components_first.append(c1)
        rep.errors_zeroth.append(max(c0))
        rep.errors_first.append(max(c1))
        rep.psi_errors_zeroth.append(projective_error(psi, reconstruct(z, e)))
        rep.psi_errors_first.append(projective_error(psi, first_order.corrected_reconstruct(z, corr, e)))
        log.info("eps=%g err0=%.3e err1=%.3e", e, max(c0), max(c1))
    rep.slope_zeroth, rep.residual_zeroth = loglog_fit(eps, rep.errors_zeroth)
    rep.slope_first, rep.residual_first = loglog_fit(eps, rep.errors_first)
    return rep


# ---------------------------------------------------------------------------
# signalling


def _y_mask(grid: Grid2D, region) -> np.ndarray:
    lo, hi = region
    lo = -np.inf if lo is None else lo
    hi = np.inf if hi is None else hi
    return (grid.y >= lo) & (grid.y <= hi)


def _normalized_l1(r1, r2, grid):
    return _l1(r1 / (r1.sum() * grid.dx) - r2 / (r2.sum() * grid.dx), grid)


def signalling_metric(scheme: str, state0: PolarState, mp: ModelParams, region, t_meas: float,
                      t_final: float, dt: float, renormalize: bool = False, r_min: float = R_MIN) -> float:
    """L1 distance between normalised classical marginals with and without a y-measurement.

    ``region`` is a y-interval ``(y0, y1)``. Outside it the amplitude is clamped
    to ``r_min`` at ``t_meas``. ``scheme`` is ``"CQ"`` (Lagrangian limit
    pipeline) or ``"HR"`` (Hall-Reginatto wave stepper); both start from the
    same ``(R, theta = theta_A + theta_B)``.
    """
    grid = state0.grid
    chi = _y_mask(grid, region)
    if not chi.any():
        raise ValidationError("measurement region contains no y-nodes")
    n_steps = int(round(t_final / dt))
    n_meas = int(round(t_meas / dt))
    if not 0 <= n_meas <= n_steps:
        raise ValidationError("t_meas must lie in [0, t_final]")
    if chi.all():
        return 0.0

    def clamp(psi, floor):
        amp = np.abs(psi)
        phase = np.where(amp > 0, psi / np.where(amp > 0, amp, 1), 1.0)
        out = np.where(chi[None, :], psi, floor * phase)
        if renormalize:
            out = out / np.sqrt(np.sum(np.abs(out) ** 2) * grid.dx * grid.dy)
        return out

    if scheme == "CQ":
        ref = cq_limit.solve_limit(state0, mp, dt, n_steps)
        flow = ref.flow
        event = {n_meas: lambda psi: clamp(psi, r_min * np.sqrt(flow.dF[n_meas])[:, None])}
        meas = cq_limit.solve_limit(state0, mp, dt, n_steps, events=event)
        r1, r2 = (marginal_rho1(s.states[-1].R ** 2, grid) for s in (ref, meas))
    elif scheme == "HR":
        psi0 = np.exp(1j * state0.theta) * state0.R
        ref = evolve_hr(psi0, grid, mp, dt, n_steps, r_min=r_min).final()
        if n_meas == 0:
            meas = evolve_hr(clamp(psi0, r_min), grid, mp, dt, n_steps, r_min=r_min).final()
        else:
            mid = evolve_hr(psi0, grid, mp, dt, n_meas, r_min=r_min).final()
            meas = evolve_hr(clamp(mid, r_min), grid, mp, dt, n_steps - n_meas, r_min=r_min).final()
        r1, r2 = marginal_rho1(np.abs(ref) ** 2, grid), marginal_rho1(np.abs(meas) ** 2, grid)
    else:
        raise ValidationError(f"unknown scheme {scheme!r}")
    return _normalized_l1(r1, r2, grid)


# ---------------------------------------------------------------------------
# change of averaging kernel


def transform_state(state: PolarState, kernel2: AveragingKernel) -> PolarState:
    """Limit data for ``kernel2`` whose total phase is ``T theta`` of the given state."""
    theta2 = transform_T(state.kernel, kernel2, state.theta)
    return PolarState(state.R, average(kernel2, theta2), apply_B(kernel2, theta2), kernel2)


def operator_equivalence_residual(state0: PolarState, mp: ModelParams, kernel2: AveragingKernel,
                                  dt: float, n_steps: int, stride: int | None = None,
                                  support_rel: float = 1e-3) -> float:
    """Max over snapshots of ``|theta' - T theta|_inf + |R' - R|_inf``.

    Both runs use the Lagrangian pipeline; the second starts from the
    transformed initial data. Phases are compared on the support of ``R``.
    """
    kernel1 = state0.kernel
    a = cq_limit.solve_limit(state0, mp, dt, n_steps, stride)
    b = cq_limit.solve_limit(transform_state(state0, kernel2), mp, dt, n_steps, stride)
    worst = 0.0
    for s1, s2 in zip(a.states, b.states):
        sup = support_mask(s1.R, support_rel)
        dth = s2.theta - transform_T(kernel1, kernel2, s1.theta)
        worst = max(worst, float(np.abs(dth)[sup].max()) + float(np.abs(s2.R - s1.R).max()))
    return worst
