"""Non-local polar representation ``psi = exp(i (theta_A / eps + theta_B)) R``."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import NodeDetected, ValidationError, WindingDetected
from .numerics import Grid2D, integrate
from .operators import AveragingKernel, apply_B, average

R_MIN = 1e-8


@dataclass(frozen=True)
class PolarState:
    R: np.ndarray
    theta_A: np.ndarray
    theta_B: np.ndarray
    kernel: AveragingKernel
    clamp_mass: float = 0.0

    @property
    def grid(self) -> Grid2D:
        return self.kernel.grid

    @property
    def theta(self) -> np.ndarray:
        """Total non-local phase ``theta_A + theta_B``."""
        return self.theta_A[:, None] + self.theta_B

    def constraint_residual(self) -> float:
        return float(np.max(np.abs(average(self.kernel, self.theta_B))))


def _unwrap_from(values: np.ndarray, start: int, axis: int) -> np.ndarray:
    """Unwrap along ``axis`` outward from index ``start`` in both directions."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[start:] = np.unwrap(v[start:], axis=0)
    out[: start + 1] = np.unwrap(v[: start + 1][::-1], axis=0)[::-1]
    return np.moveaxis(out, 0, axis)


def find_nodes(psi: np.ndarray, r_min: float = R_MIN, tail_rel: float = 1e-4) -> np.ndarray:
    """Boolean mask of sub-floor nodes enclosed by the support.

    Points with ``|psi| < tail_rel * max|psi|`` that connect to the box boundary
    form the vacuum: decayed tails where the phase is undefined but harmless.
    Sub-floor points outside the vacuum are genuine nodes.
    """
    amp = np.abs(psi)
    low = amp < r_min
    if not low.any():
        return low
    tail = amp < max(r_min, tail_rel * amp.max())
    labels, _ = ndimage.label(tail)
    edge = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    vacuum = np.isin(labels, edge[edge > 0])
    return low & ~vacuum


def unwrap_phase(psi: np.ndarray, r_min: float = R_MIN, anchor=None, check_winding: bool = False) -> np.ndarray:
    """Continuous phase branch of a node-free wave function.

    The principal argument is taken at the anchor node (default: largest
    ``|psi|``), then unwrapped along the y-line through it, then along x for
    every y-row starting from that line.
    """
    psi = np.asarray(psi)
    nodes = find_nodes(psi, r_min)
    if nodes.any():
        ix, iy = np.argwhere(nodes)[0]
        raise NodeDetected(f"|psi| < {r_min:g} inside the support at node ({ix}, {iy})")
    if anchor is None:
        anchor = np.unravel_index(np.argmax(np.abs(psi)), psi.shape)
    i0, j0 = anchor
    arg = np.angle(psi)
    column = _unwrap_from(arg[i0, :], j0, axis=0)
    shifted = arg + (column - arg[i0, :])[None, :]
    theta = _unwrap_from(shifted, i0, axis=0)
    if check_winding:
        _check_winding(psi, theta, r_min)
    return theta


def _check_winding(psi, theta, r_min):
    amp = np.abs(psi)
    seam_x = (amp[0] >= r_min) & (amp[-1] >= r_min)
    wind_x = (theta[-1] + np.angle(psi[0] / psi[-1]) - theta[0]) / (2 * np.pi)
    seam_y = (amp[:, 0] >= r_min) & (amp[:, -1] >= r_min)
    wind_y = (theta[:, -1] + np.angle(psi[:, 0] / psi[:, -1]) - theta[:, 0]) / (2 * np.pi)
    if np.any(np.abs(wind_x[seam_x]) >= 0.5) or np.any(np.abs(wind_y[seam_y]) >= 0.5):
        raise WindingDetected("phase winds around a periodic axis of the box")


def decompose(psi: np.ndarray, epsilon: float, kernel: AveragingKernel, r_min: float = R_MIN,
              anchor=None, check_winding: bool = False) -> PolarState:
    """Split ``psi`` into ``(R, theta_A, theta_B)`` with ``theta_A = eps A Theta``."""
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    big_theta = unwrap_phase(psi, r_min, anchor, check_winding)
    return PolarState(
        R=np.abs(psi),
        theta_A=epsilon * average(kernel, big_theta),
        theta_B=apply_B(kernel, big_theta),
        kernel=kernel,
    )


def reconstruct(state: PolarState, epsilon: float) -> np.ndarray:
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    return np.exp(1j * (state.theta_A[:, None] / epsilon + state.theta_B)) * state.R


def region_mask(grid: Grid2D, region) -> np.ndarray:
    """Union of axis-aligned rectangles ``((x0, x1), (y0, y1))``; ``None`` bounds mean unbounded."""
    X, Y = grid.mesh()
    mask = np.zeros(grid.shape, dtype=bool)
    for xr, yr in region:
        xlo, xhi = (-np.inf, np.inf) if xr is None else (
            -np.inf if xr[0] is None else xr[0], np.inf if xr[1] is None else xr[1])
        ylo, yhi = (-np.inf, np.inf) if yr is None else (
            -np.inf if yr[0] is None else yr[0], np.inf if yr[1] is None else yr[1])
        mask |= (X >= xlo) & (X <= xhi) & (Y >= ylo) & (Y <= yhi)
    return mask


def measure_position(state: PolarState, region, renormalize: bool = False, r_min: float = R_MIN) -> PolarState:
    """Apply the characteristic function of ``region`` to the amplitude only.

    Outside the region the amplitude is clamped to ``r_min`` rather than zeroed;
    the probability carried by the clamp is reported as ``clamp_mass``.
    """
    grid = state.grid
    mask = region_mask(grid, region)
    if not mask.any():
        raise ValidationError("measurement region contains no grid nodes")
    if mask.all():
        return state
    R = np.where(mask, state.R, r_min)
    clamp_mass = float(r_min**2 * np.count_nonzero(~mask) * grid.dx * grid.dy)
    if renormalize:
        norm = np.sqrt(integrate(R**2, grid))
        R = R / norm
        clamp_mass /= norm**2
    return replace(state, R=R, clamp_mass=clamp_mass)


def support_mask(R: np.ndarray, rel: float = 1e-3) -> np.ndarray:
    """Nodes where the amplitude exceeds ``rel`` times its maximum."""
    return R >= rel * np.max(R)
