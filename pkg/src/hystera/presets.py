"""Experiment presets: initial data, runs and the checks attached to them."""

import os
from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from .constitutive import DRAINAGE, IMBIBITION, box_bounds
from .stepper import State, time_march


@dataclass
class RunResult:
    name: str
    report: an.DiagnosticsReport
    traj: object = None
    grid: object = None
    constitutive: object = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


def _band_saturation(curves, p, theta):
    """Saturation a fraction ``theta`` of the way from the imbibition to the drainage curve at ``p``."""
    Si = curves.saturation(IMBIBITION, p)
    Sd = curves.saturation(DRAINAGE, p)
    return Si + theta * (Sd - Si)


def _state_from(p0, S0, grid, cs):
    """Build ``(u, v)`` from pressure and saturation, pinning ``u = 0`` on the boundary."""
    p0 = np.array(p0, dtype=float)
    p0[grid.boundary] = 0.0
    u0 = np.asarray(cs.base_play.value(p0), dtype=float)
    u0[grid.boundary] = 0.0
    return State(u0, S0 + u0)


def equilibrium_state(cfg, grid, cs):
    """``p = 0`` everywhere with ``S`` inside the band at ``p = 0``."""
    p0 = np.zeros(grid.n_nodes)
    S0 = np.full(grid.n_nodes, _band_saturation(cs.curves, 0.0, cfg.theta_eq))
    return _state_from(p0, S0, grid, cs)


def redistribution_state(cfg, grid, cs):
    """Wet left half on a drainage-side scanning line, dry right half on an imbibition-side one.

    The halves are joined by a ``tanh`` ramp of half-width ``cfg.width``
    (``0`` gives a sharp jump at the midpoint). The pressure is damped by a
    sine envelope so it vanishes on the boundary.
    """
    x = grid.coords[:, 0] / grid.extent[0]
    if cfg.width > 0:
        sig = 0.5 * (1.0 + np.tanh((x - 0.5) / (cfg.width / grid.extent[0])))
    else:
        sig = (x > 0.5).astype(float)
    env = np.prod(np.sin(np.pi * grid.coords / np.asarray(grid.extent)), axis=1)
    p0 = env * (cfg.p_left + (cfg.p_right - cfg.p_left) * sig)
    p0[grid.boundary] = 0.0
    theta = cfg.theta_left + (cfg.theta_right - cfg.theta_left) * sig
    S0 = _band_saturation(cs.curves, p0, theta)
    return _state_from(p0, S0, grid, cs)


def drainage_state(cfg, grid, cs):
    """Interior at ``p = drive_p`` but wetter than the drainage curve by ``drive_excess``.

    The boundary sits at ``p = 0`` on a scanning line. The interior starts
    off the band on purpose: it drains back to the drainage curve on the
    time scale ``tau`` while the drier boundary drains the column.
    """
    n = grid.n_nodes
    p0 = np.full(n, cfg.drive_p)
    S0 = np.minimum(cs.curves.saturation(DRAINAGE, p0) + cfg.drive_excess, 1.0 - 1e-3)
    S0[grid.boundary] = _band_saturation(cs.curves, 0.0, cfg.theta_boundary)
    return _state_from(p0, S0, grid, cs)


def initial_box(state, cs):
    return box_bounds((state.u.min(), state.u.max()), (state.v.min(), state.v.max()), cs.rho, cs.tau)


# ---------------------------------------------------------------------------
# Shared checks
# ---------------------------------------------------------------------------


def _contraction_check(traj, eps_fp):
    worst_c = max((r.contraction for r in traj.reports), default=0.0)
    worst_r = max((r.residual for r in traj.reports), default=0.0)
    ok = worst_c < 1.0 and worst_r <= eps_fp
    return an.CheckResult("contraction", ok, worst_c - 1.0, 0.0, {"max_contraction": worst_c, "max_residual": worst_r})


def _base_report(cfg, traj, grid, cs):
    rep = an.DiagnosticsReport()
    led = an.energy_ledger(traj, grid)
    U, V, S = traj.u, traj.v, traj.S
    rep["run_id"] = cfg.run_id
    rep["preset"] = cfg.preset
    rep["tau"] = cs.tau
    rep["dt"] = traj.dt
    rep["steps"] = len(traj) - 1
    rep["halvings"] = traj.halvings
    for name, arr in (("u", U), ("v", V), ("S", S)):
        rep[f"{name}_min"] = float(arr.min())
        rep[f"{name}_max"] = float(arr.max())
    rep["A"] = led.A
    rep["B"] = led.B
    rep["M_inf"] = led.M_inf
    rep["E"] = an.tau_mismatch(traj, cs.rho, cs.tau, grid)
    rep["iters_max"] = max((r.iters for r in traj.reports), default=0)
    rep["contraction_median"] = float(np.median([r.contraction for r in traj.reports])) if traj.reports else 0.0
    slope = an.growth_slope(traj, grid)
    rep["growth_slope"] = slope
    rep.add_check(_contraction_check(traj, cfg.eps_fp))
    rep.add_check(an.CheckResult("growth", slope < cfg.growth_ceiling, slope - cfg.growth_ceiling, 0.0))
    return rep


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def run_equilibrium(cfg):
    grid, cs = cfg.grid(), cfg.constitutive()
    init = equilibrium_state(cfg, grid, cs)
    traj = time_march(init, cfg.stepper_config(), grid, cs)
    rep = _base_report(cfg, traj, grid, cs)
    box = initial_box(init, cs)
    rep.add_check(an.check_box_bounds(traj, box, cfg.tol_bounds))
    drift = float(max(np.max(np.abs(traj.u - init.u)), np.max(np.abs(traj.v - init.v))))
    rep.add_check(an.CheckResult("stationary", drift == 0.0, drift, 0.0))
    rep.add_check(an.CheckResult("ledger_zero", rep["A"] == 0.0 and rep["B"] == 0.0, max(rep["A"], rep["B"]), 0.0))
    return RunResult("equilibrium", rep, traj, grid, cs)


def run_redistribution(cfg):
    grid, cs = cfg.grid(), cfg.constitutive()
    init = redistribution_state(cfg, grid, cs)
    box = initial_box(init, cs)
    traj = time_march(init, cfg.stepper_config(), grid, cs)
    rep = _base_report(cfg, traj, grid, cs)
    for k in ("u_l", "u_r", "v_l", "v_r", "S_l", "S_r"):
        rep[f"box_{k}"] = getattr(box, k)
    if not any(cfg.gravity) or not cfg.flux:
        rep.add_check(an.check_box_bounds(traj, box, cfg.tol_bounds))
        rep.add_check(an.check_saturation_bounds(traj, box, cs, cfg.tol_bounds))
    else:
        # Outside the hypotheses of the maximum principle; informational only.
        info = an.check_box_bounds(traj, box, cfg.tol_bounds)
        rep["box_bounds_informational"] = "pass" if info.passed else "fail"
        rep["box_bounds_informational_worst"] = info.worst
    return RunResult("redistribution", rep, traj, grid, cs, {"box": box})


def run_drainage(cfg, tau=None):
    tau = cfg.tau if tau is None else tau
    grid, cs = cfg.grid(), cfg.constitutive(tau)
    init = drainage_state(cfg, grid, cs)
    traj = time_march(init, cfg.stepper_config(tau), grid, cs, check_initial=False)
    rep = _base_report(cfg, traj, grid, cs)
    bound = an.mismatch_bound(traj, cs.rho, tau, grid)
    rep["E_bound"] = bound
    rep.add_check(an.CheckResult("mismatch_bound", rep["E"] <= cfg.bound_slack * bound, rep["E"] - cfg.bound_slack * bound, 0.0))
    return RunResult("drainage-drive", rep, traj, grid, cs, {"bound": bound})


def _sweep_member(cfg, tau):
    res = run_drainage(cfg, tau)
    row = an.SweepRow(tau, res.report["E"], res.report["B"], res.extra["bound"])
    return row, res


class _SweepMember:
    """Picklable ``tau -> SweepRow`` runner that also writes per-member files."""

    def __init__(self, cfg, out):
        self.cfg = cfg
        self.out = out

    def __call__(self, tau):
        row, res = _sweep_member(self.cfg, tau)
        if self.out is not None:
            k = list(self.cfg.tau_list).index(tau)
            write_run_files(res, self.cfg, self.out, run_id=f"{self.cfg.run_id}_tau{k}")
        return row


def run_tau_sweep(cfg, jobs=1, out=None):
    table = an.tau_sweep(_SweepMember(cfg, out), cfg.tau_list, jobs)
    rep = an.DiagnosticsReport()
    rep["run_id"] = cfg.run_id
    rep["preset"] = cfg.preset
    slope, (lo, hi) = table.slope_interval()
    rep["slope"] = slope
    rep["slope_ci_low"] = lo
    rep["slope_ci_high"] = hi
    rep["B_ratio"] = table.B_ratio
    for k, r in enumerate(table.rows):
        rep[f"tau{k}"] = r.tau
        rep[f"E{k}"] = r.E
        rep[f"B{k}"] = r.B
        rep[f"bound{k}"] = r.bound
        rep[f"status{k}"] = r.status
    aborted = [r for r in table.rows if r.status != "ok"]
    rep.add_check(an.CheckResult("members_completed", not aborted, float(len(aborted)), 0.0))
    if table.degenerate:
        rep["slope_note"] = "degenerate: fewer than two positive E values"
    else:
        rep.add_check(an.CheckResult("E_decreasing", table.E_decreasing(), 0.0, 0.0))
        ok = cfg.slope_min <= slope <= cfg.slope_max
        worst = max(cfg.slope_min - slope, slope - cfg.slope_max)
        rep.add_check(an.CheckResult("E_slope", ok, worst, 0.0, note=f"slope {slope:.3f} vs [{cfg.slope_min}, {cfg.slope_max}]"))
    rep.add_check(an.CheckResult("B_ratio", table.B_ratio < cfg.b_ratio_max, table.B_ratio - cfg.b_ratio_max, 0.0))
    excess = max((r.E - cfg.bound_slack * r.bound for r in table.rows if r.status == "ok"), default=0.0)
    rep.add_check(an.CheckResult("mismatch_bound", excess <= 0.0, excess, 0.0))
    return RunResult("tau-sweep", rep, extra={"table": table})


def run_scan_loop(cfg):
    cs = cfg.constitutive()
    rho = cs.rho
    lo = rho.U_m + cfg.loop_low_frac * (rho.U_M - rho.U_m)
    hi = rho.U_m + cfg.loop_high_frac * (rho.U_M - rho.U_m)
    forcing = an.triangle_wave(lo, hi, cfg.loop_period, cfg.loop_cycles)
    rep = an.DiagnosticsReport()
    rep["run_id"] = cfg.run_id
    rep["preset"] = cfg.preset
    loops, areas, worst_band = [], [], 0.0
    for k, tau in enumerate(cfg.tau_list):
        loop = an.scan_loop_0d(forcing, cfg.loop_v0, tau, cfg.loop_dt, cs.with_tau(tau))
        sl = an.last_cycle(loop, cfg.loop_period)
        area = an.loop_area(loop.S[sl], loop.p[sl])
        gap = float(np.hypot(loop.S[sl][0] - loop.S[sl][-1], loop.p[sl][0] - loop.p[sl][-1]))
        band, count = an.band_constancy(loop, rho)
        worst_band = max(worst_band, band)
        rep[f"tau{k}"] = tau
        rep[f"area{k}"] = area
        rep[f"closure_gap{k}"] = gap
        rep[f"band_steps{k}"] = count
        loops.append(loop)
        areas.append(area)
    decreasing = bool(np.all(np.diff(areas) < 0))
    rep.add_check(an.CheckResult("area_decreasing", decreasing, float(np.max(np.diff(areas))), 0.0))
    rep.add_check(an.CheckResult("band_constancy", worst_band <= cfg.eps_fp, worst_band, cfg.eps_fp))
    rep.add_check(an.CheckResult("area_positive", min(areas) > 0, -min(areas), 0.0))
    return RunResult("scan-loop", rep, constitutive=cs, extra={"loops": loops, "areas": areas})


PRESET_RUNNERS = {
    "equilibrium": run_equilibrium,
    "redistribution": run_redistribution,
    "drainage-drive": run_drainage,
    "scan-loop": run_scan_loop,
    "tau-sweep": run_tau_sweep,
}


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def write_rho_csv(rho, directory, run_id):
    paths = []
    for branch, col in ((IMBIBITION, "rho_i"), (DRAINAGE, "rho_d")):
        v, r = rho.table(branch)
        path = os.path.join(directory, f"{run_id}_{col}.csv")
        with open(path, "w", newline="\n") as fh:
            fh.write(f"v,{col}\n")
            for a, b in zip(v.tolist(), r.tolist()):
                fh.write(f"{a!r},{b!r}\n")
        paths.append(path)
    return paths


def write_run_files(result, cfg, directory, run_id=None):
    """Write trajectory, step, diagnostics (and loop) CSVs for one result."""
    run_id = run_id or cfg.run_id
    paths = []
    if result.traj is not None:
        traj = result.traj
        if cfg.traj_every > 1:
            keep = list(range(0, len(traj), cfg.traj_every))
            if keep[-1] != len(traj) - 1:
                keep.append(len(traj) - 1)
            traj = type(traj)([traj.times[i] for i in keep], [traj.states[i] for i in keep], traj.reports, traj.dt)
        tp = os.path.join(directory, f"{run_id}_traj.csv")
        sp = os.path.join(directory, f"{run_id}_steps.csv")
        traj.write_csv(tp, sp, result.grid)
        paths += [tp, sp]
    if "loops" in result.extra:
        lp = os.path.join(directory, f"{run_id}_loop.csv")
        with open(lp, "w", newline="\n") as fh:
            fh.write("tau,t,u,v,S,p\n")
            for loop in result.extra["loops"]:
                for row in zip(loop.t.tolist(), loop.u.tolist(), loop.v.tolist(), loop.S.tolist(), loop.p.tolist()):
                    fh.write(f"{loop.tau!r}," + ",".join(repr(x) for x in row) + "\n")
        paths.append(lp)
    if "table" in result.extra:
        sw = os.path.join(directory, "sweep.csv")
        result.extra["table"].to_csv(sw)
        paths.append(sw)
    dp = os.path.join(directory, f"{run_id}_diag.csv")
    result.report.to_csv(dp)
    paths.append(dp)
    return paths
