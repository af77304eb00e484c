"""Experiment configuration files (INI-style ``key = value`` sections).

``load_config`` collects every problem it finds before raising, so a broken
file is reported in one pass.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ExpressionError, KernelError, ValidationError
from .expr import PotentialExpr, parse_potential
from .full_qm import ModelParams
from .numerics import Grid2D, integrate
from .operators import AveragingKernel, apply_B, make_kernel
from .polar import PolarState

_NUMERIC_DEFAULTS = {
    "solver": {"r_min": 1e-8, "caustic_tol": 1e-3, "support_rel": 1e-3, "substeps": 4},
    "signalling": {"t_meas": 0.0},
}

DEFAULT_CHECKS = {
    "norm_drift_max": 1e-10,
    "mass_drift_max": 1e-8,
    "constraint_max": 1e-9,
    "oracle_max": 1e-3,
    "slope_zeroth_min": 0.8,
    "slope_zeroth_max": 1.2,
    "slope_first_min": 1.7,
    "slope_first_max": 2.3,
    "fit_residual_max": 0.1,
    "cq_signalling_max": 1e-6,
    "hr_signalling_ratio_min": 10.0,
    "full_domain_max": 1e-12,
    "backreaction_max": 1e-6,
    "hr_backreaction_min": 1e-3,
    "equivalence_max": 1e-6,
}


@dataclass
class InitialSpec:
    family: str = "gaussian"
    x0: float = 0.0
    y0: float = 0.0
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    kx: float = 0.0
    ky: float = 0.0
    theta_A: PotentialExpr | None = None
    theta_B: PotentialExpr | None = None


@dataclass
class ExperimentConfig:
    grid: Grid2D
    model: ModelParams
    U_text: str
    V_text: str
    kernel: AveragingKernel
    kernel2: AveragingKernel | None
    initial: InitialSpec
    dt: float
    t_final: float
    stride: int
    dt_full: float
    r_min: float
    caustic_tol: float
    support_rel: float
    substeps: int
    epsilons: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    region: tuple = (0.0, None)
    t_meas: float = 0.0
    renormalize: bool = False
    oracle: bool = False
    checks: dict = field(default_factory=lambda: dict(DEFAULT_CHECKS))
    source: str = ""

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def initial_state(self, kernel: AveragingKernel | None = None) -> PolarState:
        """Limit initial data ``(R0, theta_A0, B theta_B0)`` for the configured family."""
        kernel = kernel or self.kernel
        g, s = self.grid, self.initial
        X, Y = g.mesh()
        gx = np.exp(-((g.x - s.x0) ** 2) / (4 * s.sigma_x**2))
        gy = np.exp(-((g.y - s.y0) ** 2) / (4 * s.sigma_y**2))
        R = np.outer(gx, gy)
        R = R / math.sqrt(integrate(R**2, g))
        tA = s.kx * g.x + (s.theta_A(g.x, 0.0) if s.theta_A else 0.0)
        tB = s.ky * Y + (s.theta_B(X, Y) if s.theta_B else 0.0)
        return PolarState(R, np.asarray(tA, dtype=float) + 0.0 * g.x, apply_B(kernel, tB + 0.0 * X), kernel)


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp, self.errors = cp, []

    def get(self, section, key, kind=float, default=None, required=False):
        if not self.cp.has_option(section, key):
            if required:
                self.errors.append(f"[{section}] missing key {key!r}")
            return default
        raw = self.cp.get(section, key).strip()
        try:
            if kind is bool:
                return self.cp.getboolean(section, key)
            if kind is int:
                val = float(raw)
                if val != int(val):
                    raise ValueError
                return int(val)
            if kind is float:
                return float(raw)
            return raw
        except ValueError:
            self.errors.append(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}")
            return default

    def expr(self, section, key, default=None, allowed=("x", "y")):
        text = self.get(section, key, str, default)
        if text is None:
            return None, None
        try:
            e = parse_potential(text)
        except ExpressionError as exc:
            self.errors.append(f"[{section}] {key}: {exc}")
            return None, text
        extra = e.variables - set(allowed)
        if extra:
            self.errors.append(f"{key} must not reference {', '.join(sorted(extra))}")
        return e, text


def _float_list(text):
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _bound(text):
    t = text.strip().lower()
    if t in ("none", "inf", "+inf", "-inf", ""):
        return None
    return float(t)


def _kernel(rd: _Reader, section: str, grid):
    if not rd.cp.has_section(section):
        return None
    kind = rd.get(section, "type", str, required=True)
    spec = {"type": kind}
    for key in ("a", "b"):
        v = rd.get(section, key, float)
        if v is not None:
            spec[key] = v
    alpha = None
    if kind == "general":
        alpha, text = rd.expr(section, "alpha", allowed=("y",))
        spec["alpha_expr"] = text
        if alpha is None:
            rd.errors.append(f"[{section}] general kernel needs alpha")
            return None
    missing = {"window": ("a", "b"), "point": ("a",)}.get(kind, ())
    if any(k not in spec for k in missing):
        rd.errors.append(f"[{section}] {kind} kernel needs {', '.join(missing)}")
        return None
    if grid is None:
        return None
    try:
        return make_kernel(spec, grid, (lambda y: alpha(0.0, y)) if alpha else None)
    except KernelError as exc:
        rd.errors.append(f"[{section}] {exc}")
        return None


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ValidationError(f"{source}: {exc}") from None
    rd = _Reader(cp)
    for sec in ("grid", "model", "kernel", "initial", "solver"):
        if not cp.has_section(sec):
            rd.errors.append(f"missing section [{sec}]")

    g = {k: rd.get("grid", k, int if k in ("nx", "ny") else float, required=True)
         for k in ("nx", "ny", "x_min", "x_max", "y_min", "y_max")}
    grid = None
    if None not in g.values():
        try:
            grid = Grid2D(**g)
        except ValueError as exc:
            rd.errors.append(f"[grid] {exc}")

    U, U_text = rd.expr("model", "U", "0", allowed=("x",))
    V, V_text = rd.expr("model", "V", "0")
    m = {k: rd.get("model", k, float, 1.0) for k in ("m1", "m2", "epsilon")}
    model = None
    try:
        model = ModelParams(m["m1"], m["m2"], m["epsilon"], U, V)
    except (ValidationError, TypeError) as exc:
        rd.errors.extend(getattr(exc, "errors", [str(exc)]))

    kernel = _kernel(rd, "kernel", grid)
    kernel2 = _kernel(rd, "kernel2", grid)

    init = InitialSpec()
    init.family = rd.get("initial", "family", str, "gaussian")
    if init.family != "gaussian":
        rd.errors.append(f"[initial] unknown family {init.family!r}")
    for key in ("x0", "y0", "sigma_x", "sigma_y", "kx", "ky"):
        setattr(init, key, rd.get("initial", key, float, getattr(init, key)))
    for key in ("sigma_x", "sigma_y"):
        if getattr(init, key) is not None and not getattr(init, key) > 0:
            rd.errors.append(f"[initial] {key} must be positive")
    init.theta_A, _ = rd.expr("initial", "theta_A", allowed=("x",))
    init.theta_B, _ = rd.expr("initial", "theta_B")

    dt = rd.get("solver", "dt", float, required=True)
    t_final = rd.get("solver", "t_final", float, required=True)
    if dt is not None and not dt > 0:
        rd.errors.append("[solver] dt must be positive")
    if t_final is not None and not t_final > 0:
        rd.errors.append("[solver] t_final must be positive")
    n_steps = int(round(t_final / dt)) if dt and t_final and dt > 0 and t_final > 0 else 1
    if dt and t_final and dt > 0 and abs(n_steps * dt - t_final) > 1e-9 * t_final:
        rd.errors.append("[solver] t_final must be a multiple of dt")
    stride = rd.get("solver", "stride", int, n_steps)
    if stride is not None and stride < 1:
        rd.errors.append("[solver] stride must be >= 1")
    dt_full = rd.get("solver", "dt_full", float, dt)
    if dt_full is not None and not dt_full > 0:
        rd.errors.append("[solver] dt_full must be positive")
    num = {k: rd.get("solver", k, type(v), v) for k, v in _NUMERIC_DEFAULTS["solver"].items()}
    oracle = rd.get("solver", "oracle", bool, False)

    epsilons = [0.2, 0.1, 0.05]
    if cp.has_option("convergence", "epsilons"):
        try:
            epsilons = _float_list(cp.get("convergence", "epsilons"))
        except ValueError:
            rd.errors.append("[convergence] epsilons must be a comma-separated list of numbers")

    region, t_meas, renorm = (0.0, None), 0.0, False
    if cp.has_section("signalling"):
        raw = rd.get("signalling", "region", str, "0, inf")
        try:
            lo, hi = raw.split(",")
            region = (_bound(lo), _bound(hi))
        except ValueError:
            rd.errors.append("[signalling] region must be 'y0, y1'")
        t_meas = rd.get("signalling", "t_meas", float, 0.0)
        renorm = rd.get("signalling", "renormalize", bool, False)

    checks = dict(DEFAULT_CHECKS)
    if cp.has_section("checks"):
        for key in cp.options("checks"):
            if key not in DEFAULT_CHECKS:
                rd.errors.append(f"[checks] unknown key {key!r}")
            else:
                checks[key] = rd.get("checks", key, float, DEFAULT_CHECKS[key])

    if rd.errors:
        raise ValidationError(rd.errors)
    return ExperimentConfig(
        grid=grid, model=model, U_text=U_text, V_text=V_text, kernel=kernel, kernel2=kernel2,
        initial=init, dt=dt, t_final=t_final, stride=stride, dt_full=dt_full,
        r_min=num["r_min"], caustic_tol=num["caustic_tol"], support_rel=num["support_rel"],
        substeps=int(num["substeps"]), epsilons=epsilons, region=region, t_meas=t_meas,
        renormalize=renorm, oracle=oracle, checks=checks, source=source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text, str(path))
