"""Command-line entry point: ``cqlimit <subcommand> --config FILE --out DIR``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import cq_limit, diagnostics, first_order, hybrid_hr
from .config import ExperimentConfig, load_config
from .errors import CQLimitError, ValidationError
from .full_qm import energy, evolve_full, norm
from .numerics import integrate
from .polar import reconstruct, support_mask

log = logging.getLogger("cqlimit")

SUBCOMMANDS = ("evolve-full", "evolve-limit", "evolve-corrected", "evolve-hr", "convergence",
               "signalling", "backreaction", "operator-check", "caustic-scan")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_summary(path: Path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {_fmt(v)}\n")


def field_rows(grid, t, *fields):
    X, Y = grid.mesh()
    cols = [np.ravel(np.broadcast_to(f, grid.shape)) for f in fields]
    for i, (x, y) in enumerate(zip(X.ravel(), Y.ravel())):
        yield (t, x, y) + tuple(c[i] for c in cols)


class Run:
    """Artifacts and checks accumulated by one subcommand."""

    def __init__(self, out: Path, plots: bool, timestamps: bool):
        self.out, self.plots, self.timestamps = out, plots, timestamps
        self.summary: dict = {}
        self.checks: dict = {}

    def check(self, name: str, ok: bool) -> None:
        self.checks[name] = bool(ok)
        self.summary[f"check_{name}"] = "pass" if ok else "fail"

    def figure(self, name: str, draw) -> None:
        if not self.plots:
            return
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        plt.rcParams["svg.hashsalt"] = "cqlimit"
        fig, ax = plt.subplots(figsize=(5, 4))
        draw(ax)
        fig.tight_layout()
        meta = {} if self.timestamps else {"Date": None}
        fig.savefig(self.out / f"{name}.svg", format="svg", metadata=meta)
        plt.close(fig)


def _heat(grid, field, title):
    def draw(ax):
        im = ax.imshow(field.T, origin="lower", aspect="auto",
                       extent=(grid.x_min, grid.x_max, grid.y_min, grid.y_max))
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_title(title)
        ax.figure.colorbar(im, ax=ax)
    return draw


def cmd_evolve_full(cfg: ExperimentConfig, run: Run) -> None:
    g, mp = cfg.grid, cfg.model
    psi0 = reconstruct(cfg.initial_state(), mp.epsilon)
    psi0 = psi0 / norm(psi0, g)
    n = int(round(cfg.t_final / cfg.dt_full))
    traj = evolve_full(psi0, g, mp, cfg.dt_full, n, cfg.stride)
    norms = [norm(p, g) for p in traj.states]
    write_csv(run.out / "full_series.csv", ["t", "norm", "energy"],
              [(t, nr, energy(p, g, mp)) for t, nr, p in zip(traj.times, norms, traj.states)])
    psi = traj.final()
    write_csv(run.out / "full_final.csv", ["t", "x", "y", "re_psi", "im_psi"],
              field_rows(g, traj.times[-1], psi.real, psi.imag))
    drift = max(abs(v - norms[0]) for v in norms)
    run.summary.update(n_steps=n, norm_drift=drift, final_time=traj.times[-1])
    run.check("norm_drift", drift <= cfg.checks["norm_drift_max"] * max(1.0, n / 1000))
    run.figure("full_density", _heat(g, np.abs(psi) ** 2, "|psi|^2"))


def cmd_evolve_limit(cfg: ExperimentConfig, run: Run) -> None:
    g = cfg.grid
    st = cfg.initial_state()
    sol = cq_limit.solve_limit(st, cfg.model, cfg.dt, cfg.n_steps, cfg.stride, cfg.r_min, cfg.caustic_tol,
                               substeps=cfg.substeps)
    fin = sol.states[-1]
    write_csv(run.out / "limit_final.csv", ["t", "x", "y", "R", "theta_A", "theta_B"],
              field_rows(g, sol.times[-1], fin.R, fin.theta_A[:, None], fin.theta_B))
    flow = sol.flow
    idx = cq_limit.snapshot_indices(len(flow.t_grid), cfg.stride)
    write_csv(run.out / "flow.csv", ["t", "x", "X", "P", "dF"],
              ((flow.t_grid[n], x, flow.X[n, i], flow.P[n, i], flow.dF[n, i])
               for n in idx for i, x in enumerate(flow.labels)))
    masses = [integrate(s.R**2, g) for s in sol.states]
    drift = max(abs(m - masses[0]) for m in masses) / max(cfg.t_final, 1e-300)
    constraint = max(s.constraint_residual() for s in sol.states)
    run.summary.update(caustic_time="none" if sol.caustic_time is None else sol.caustic_time,
                       mass_drift_per_time=drift, constraint=constraint)
    run.check("mass", drift <= cfg.checks["mass_drift_max"])
    run.check("constraint", constraint <= cfg.checks["constraint_max"])
    if cfg.oracle:
        d = cq_limit.evolve_limit_direct(st, cfg.model, cfg.dt, cfg.n_steps, cfg.stride, r_min=cfg.r_min)
        gap = 0.0
        for a, b in zip(sol.states, d.states):
            sup = support_mask(a.R, cfg.support_rel)
            gap = max(gap, float(np.abs(a.R - b.R).max()), float(np.abs(a.theta_B - b.theta_B)[sup].max()))
        run.summary["oracle_discrepancy"] = gap
        run.check("oracle", gap <= cfg.checks["oracle_max"])
    run.figure("limit_density", _heat(g, fin.R**2, "R^2"))


def cmd_evolve_corrected(cfg: ExperimentConfig, run: Run) -> None:
    g = cfg.grid
    tr = first_order.evolve_correction(cfg.initial_state(), None, cfg.model, cfg.dt, cfg.n_steps, cfg.stride,
                                       cfg.r_min)
    c = tr.corrections[-1]
    write_csv(run.out / "correction_final.csv", ["t", "x", "y", "mu", "nu", "omega"],
              field_rows(g, tr.times[-1], c.mu, c.nu[:, None], c.omega))
    psi = first_order.corrected_reconstruct(tr.zeroth[-1], c, cfg.model.epsilon, cfg.r_min)
    write_csv(run.out / "corrected_final.csv", ["t", "x", "y", "re_psi", "im_psi"],
              field_rows(g, tr.times[-1], psi.real, psi.imag))
    run.summary.update(constraint_drift=tr.constraint_drift, nu_x_variation=float(np.ptp(c.nu)))
    run.check("constraint", tr.constraint_drift <= cfg.checks["constraint_max"])


def cmd_evolve_hr(cfg: ExperimentConfig, run: Run) -> None:
    g = cfg.grid
    st = cfg.initial_state()
    psi0 = np.exp(1j * st.theta) * st.R
    traj = hybrid_hr.evolve_hr(psi0, g, cfg.model, cfg.dt, cfg.n_steps, cfg.stride, cfg.r_min)
    write_csv(run.out / "hr_marginals.csv", ["t", "x", "rho1"],
              ((t, x, r) for t, p in zip(traj.times, traj.states)
               for x, r in zip(g.x, diagnostics.marginal_rho1(np.abs(p) ** 2, g))))
    masses = [integrate(np.abs(p) ** 2, g) for p in traj.states]
    drift = max(abs(m - masses[0]) for m in masses)
    run.summary.update(mass_drift=drift)
    run.check("mass", drift <= cfg.checks["mass_drift_max"] * max(1.0, cfg.t_final))
    run.figure("hr_density", _heat(g, np.abs(traj.final()) ** 2, "HR |psi|^2"))


def cmd_convergence(cfg: ExperimentConfig, run: Run) -> None:
    rep = diagnostics.convergence_study(cfg.initial_state(), cfg.model, cfg.epsilons, cfg.t_final,
                                        cfg.dt_full, cfg.dt, cfg.support_rel)
    write_csv(run.out / "convergence.csv",
              ["eps", "err0", "err1", "err0_R", "err0_theta_A", "err0_theta_B",
               "err1_R", "err1_theta_A", "err1_theta_B", "psi_err0", "psi_err1"],
              [(e, a, b, *c0, *c1, p0, p1) for e, a, b, c0, c1, p0, p1 in
               zip(rep.epsilons, rep.errors_zeroth, rep.errors_first, rep.components_zeroth,
                   rep.components_first, rep.psi_errors_zeroth, rep.psi_errors_first)])
    ch = cfg.checks
    run.summary.update(slope_zeroth=rep.slope_zeroth, slope_first=rep.slope_first,
                       residual_zeroth=rep.residual_zeroth, residual_first=rep.residual_first)
    run.check("slope_zeroth", ch["slope_zeroth_min"] <= rep.slope_zeroth <= ch["slope_zeroth_max"])
    run.check("slope_first", ch["slope_first_min"] <= rep.slope_first <= ch["slope_first_max"])
    run.check("fit_residual", max(rep.residual_zeroth, rep.residual_first) <= ch["fit_residual_max"])

    def draw(ax):
        ax.loglog(rep.epsilons, rep.errors_zeroth, "o-", label="zeroth order")
        ax.loglog(rep.epsilons, rep.errors_first, "s-", label="first order")
        ax.set_xlabel("eps")
        ax.set_ylabel("max error")
        ax.legend()
    run.figure("convergence", draw)


def cmd_signalling(cfg: ExperimentConfig, run: Run) -> None:
    st = cfg.initial_state()
    full = (None, None)
    rows, vals = [], {}
    for scheme in ("CQ", "HR"):
        for label, region in (("region", cfg.region), ("full", full)):
            m = diagnostics.signalling_metric(scheme, st, cfg.model, region, cfg.t_meas, cfg.t_final, cfg.dt,
                                              cfg.renormalize, cfg.r_min)
            vals[(scheme, label)] = m
            rows.append((scheme, label, "none" if region[0] is None else region[0],
                         "none" if region[1] is None else region[1], m))
    write_csv(run.out / "signalling.csv", ["scheme", "measurement", "y0", "y1", "metric"], rows)
    cq, hr = vals[("CQ", "region")], vals[("HR", "region")]
    ch = cfg.checks
    run.summary.update(cq_metric=cq, hr_metric=hr, cq_full=vals[("CQ", "full")], hr_full=vals[("HR", "full")])
    run.check("cq_no_signalling", cq <= ch["cq_signalling_max"])
    run.check("hr_signalling", hr >= ch["hr_signalling_ratio_min"] * cq and hr > 0)
    run.check("full_domain", max(vals[("CQ", "full")], vals[("HR", "full")]) <= ch["full_domain_max"])


def cmd_backreaction(cfg: ExperimentConfig, run: Run) -> None:
    st = cfg.initial_state()
    sol = cq_limit.solve_limit(st, cfg.model, cfg.dt, cfg.n_steps, cfg.stride, cfg.r_min, cfg.caustic_tol,
                               substeps=cfg.substeps)
    cq = diagnostics.backreaction_residual(sol, cfg.model, cfg.dt, cfg.support_rel)
    traj = hybrid_hr.evolve_hr(np.exp(1j * st.theta) * st.R, cfg.grid, cfg.model, cfg.dt, cfg.n_steps,
                               cfg.stride, cfg.r_min)
    hr = diagnostics.backreaction_residual_hr(traj, cfg.kernel, cfg.model, cfg.dt, cfg.support_rel)
    write_csv(run.out / "backreaction.csv", ["scheme", "residual"], [("CQ", cq), ("HR", hr)])
    run.summary.update(cq_residual=cq, hr_residual=hr)
    run.check("cq_no_backreaction", cq <= cfg.checks["backreaction_max"])
    run.check("hr_backreaction", hr >= cfg.checks["hr_backreaction_min"])


def cmd_operator_check(cfg: ExperimentConfig, run: Run) -> None:
    k2 = cfg.kernel2 or cfg.kernel
    res = diagnostics.operator_equivalence_residual(cfg.initial_state(), cfg.model, k2, cfg.dt, cfg.n_steps,
                                                    cfg.stride, cfg.support_rel)
    write_csv(run.out / "operator_check.csv", ["kernel1", "kernel2", "residual"],
              [(repr(cfg.kernel), repr(k2), res)])
    run.summary.update(residual=res)
    run.check("equivalence", res <= cfg.checks["equivalence_max"])


def cmd_caustic_scan(cfg: ExperimentConfig, run: Run) -> None:
    st = cfg.initial_state()
    t_grid = cfg.dt * np.arange(cfg.n_steps + 1)
    flow = cq_limit.hamiltonian_flow(cfg.model.U, st.theta_A, cfg.model.m1, t_grid, cfg.grid.x,
                                     substeps=cfg.substeps, box=(cfg.grid.x_min, cfg.grid.x_max))
    tc = cq_limit.check_caustic(flow, cfg.caustic_tol)
    idx = cq_limit.snapshot_indices(len(t_grid), cfg.stride)
    write_csv(run.out / "caustic_scan.csv", ["t", "min_dF"], ((t_grid[n], flow.dF[n].min()) for n in idx))
    run.summary.update(caustic_time="none" if tc is None else tc)


COMMANDS = {
    "evolve-full": cmd_evolve_full,
    "evolve-limit": cmd_evolve_limit,
    "evolve-corrected": cmd_evolve_corrected,
    "evolve-hr": cmd_evolve_hr,
    "convergence": cmd_convergence,
    "signalling": cmd_signalling,
    "backreaction": cmd_backreaction,
    "operator-check": cmd_operator_check,
    "caustic-scan": cmd_caustic_scan,
}


def run_subcommand(name: str, config_path, out_dir, plots: bool = False, timestamps: bool = False) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(out, plots, timestamps)
    run.summary["subcommand"] = name
    status = 1
    try:
        cfg = load_config(config_path)
        COMMANDS[name](cfg, run)
        status = 0 if all(run.checks.values()) else 1
        run.summary["status"] = "pass" if status == 0 else "fail"
    except (CQLimitError, ValueError) as exc:
        run.summary["status"] = "error"
        run.summary["error"] = f"{type(exc).__name__}: {exc}"
        log.error("%s: %s", type(exc).__name__, exc)
    write_summary(out / "summary.txt", run.summary)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cqlimit", description="Classical-quantum limit experiments.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="experiment configuration file")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--plots", action="store_true", help="also write SVG plots")
    ap.add_argument("--seedless-timestamps", action="store_true",
                    help="embed creation timestamps in plots (breaks byte reproducibility of SVGs)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run_subcommand(args.subcommand, args.config, args.out, args.plots, args.seedless_timestamps)


if __name__ == "__main__":
    sys.exit(main())
