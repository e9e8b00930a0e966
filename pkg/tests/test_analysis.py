"""Diagnostics: invariant-region checks, energy ledger, mismatch, interpolants, loops, sweeps."""

import dataclasses
import math

import numpy as np
import pytest

from hystera import analysis as an
from hystera.config import parse_config
from hystera.constitutive import DRAINAGE, RhoCurves, box_bounds
from hystera.errors import DomainError
from hystera.presets import run_equilibrium, run_redistribution
from hystera.stepper import State, time_march


def _cfg(preset="redistribution", **kw):
    cfg = parse_config(preset=preset, run_id="a", **kw)
    return cfg, cfg.grid(), cfg.constitutive()


def _line_state(g, cs, v0=0.93, amp=0.6):
    """Every node on the scanning line of ``v0``; u a sine inside the band."""
    rho = cs.rho
    lo, hi = float(rho.rho_i(v0)), float(rho.rho_d(v0))
    assert lo < 0 < hi
    u = amp * hi * np.sin(np.pi * g.x)
    u[g.boundary] = 0.0
    return State(u, np.full(g.n_nodes, v0))


# -- invariant regions -----------------------------------------------------------


def test_equilibrium_extrema_unchanged():
    res = run_equilibrium(parse_config(preset="equilibrium", run_id="e"))
    init = res.traj.states[0]
    box = box_bounds((init.u.min(), init.u.max()), (init.v.min(), init.v.max()), res.constitutive.rho)
    chk = an.check_box_bounds(res.traj, box)
    assert chk.passed
    assert chk.extrema["u_min"] == init.u.min() and chk.extrema["v_max"] == init.v.max()
    assert res.report["A"] == 0.0 and res.report["B"] == 0.0


def test_redistribution_bounds(redis_run):
    box = redis_run.extra["box"]
    assert redis_run.report.passed
    sat = [c for c in redis_run.report.checks if c.name == "saturation_bounds"][0]
    assert sat.passed and sat.extrema["mu_below_S_l"]
    assert box.S_r < 1.0 and box.S_l > 0.0


def test_flux_run_is_informational():
    cfg = parse_config(preset="redistribution", run_id="g", nodes=51, gravity=(5.0,), flux=True, t_final=0.01)
    res = run_redistribution(cfg)
    names = [c.name for c in res.report.checks]
    assert "box_bounds" not in names and "saturation_bounds" not in names
    assert res.report["box_bounds_informational"] in ("pass", "fail")


def test_single_scanning_line():
    cfg, g, cs = _cfg(nodes=51, t_final=0.05)
    s0 = _line_state(g, cs)
    traj = time_march(s0, cfg.stepper_config(), g, cs)
    v0 = 0.93
    lo, hi = v0 - float(cs.rho.rho_d(v0)), v0 - float(cs.rho.rho_i(v0))
    box = box_bounds((s0.u.min(), s0.u.max()), (v0, v0), cs.rho)
    assert box.S_l == pytest.approx(lo) and box.S_r == pytest.approx(hi)
    S = traj.S
    assert S.min() >= lo - 1e-8 and S.max() <= hi + 1e-8
    # Data stays on the line: no hysteretic motion.
    np.testing.assert_array_equal(traj.v[-1], s0.v)


def test_saturation_check_flags_mu():
    cfg, g, cs = _cfg(nodes=21, t_final=0.002)
    s0 = _line_state(g, cs)
    traj = time_march(s0, cfg.stepper_config(), g, cs)
    box = box_bounds((s0.u.min(), s0.u.max()), (0.93, 0.93), cs.rho)
    cut = dataclasses.replace(cs, perm=dataclasses.replace(cs.perm, mu=0.95))
    with pytest.warns(RuntimeWarning, match="mu"):
        chk = an.check_saturation_bounds(traj, box, cut)
    assert not chk.passed


def test_box_violation_detected(redis_run):
    box = redis_run.extra["box"]
    tight = dataclasses.replace(box, u_r=float(redis_run.traj.u.max()) - 1e-3)
    chk = an.check_box_bounds(redis_run.traj, tight, 1e-8)
    assert not chk.passed and chk.worst > 0


# -- energy ledger --------------------------------------------------------------


def test_pure_diffusion_ledger():
    cfg, g, cs = _cfg(nodes=51, t_final=0.05)
    s0 = _line_state(g, cs)
    traj = time_march(s0, cfg.stepper_config(), g, cs)
    led = an.energy_ledger(traj, g)
    assert led.B > 0 and led.A > 0
    from hystera.grid import grad_norm_sq

    contrib = [grad_norm_sq(u, g) for u in traj.u[1:]]
    assert np.all(np.diff(contrib) < 0)
    assert an.growth_slope(traj, g) < 0


def test_ledger_by_hand():
    g = parse_config(nodes=3, run_id="x").grid()  # h = 1/2, lumped weights 1/4, 1/2, 1/4
    states = [State(np.array([0.0, a, 0.0]), np.array([1.0, 1.0 + a, 1.0])) for a in (0.0, 0.2, 0.3)]
    traj = an_traj(states, 0.1)
    led = an.energy_ledger(traj, g)
    # A = sum ||du||^2 + ||dv||^2 = 2 * 0.5 * (0.2^2 + 0.1^2)
    assert led.A == pytest.approx(0.05)
    # ||grad u||^2 = a^2 * 2/h = 4 a^2
    assert led.B == pytest.approx(0.1 * 4 * (0.04 + 0.09))
    assert led.M_inf == pytest.approx(0.5 * 0.09 + 0.5 + 0.5 * 1.3**2)


def an_traj(states, dt):
    from hystera.stepper import Trajectory

    return Trajectory([k * dt for k in range(len(states))], states, [], dt)


# -- mismatch -----------------------------------------------------------------


def test_band_data_has_no_mismatch():
    cfg, g, cs = _cfg(nodes=31, t_final=0.01)
    traj = time_march(_line_state(g, cs), cfg.stepper_config(), g, cs)
    assert an.tau_mismatch(traj, cs.rho, cs.tau, g) == 0.0


def test_forced_overshoot_mismatch():
    """0-D run pushed above the drainage curve; E against a plain-loop quadrature."""
    cs = parse_config(preset="scan-loop", run_id="x").constitutive(0.05)
    rho = cs.rho
    v0 = 0.7
    u_top = float(rho.rho_d(v0)) + 0.02
    loop = an.scan_loop_0d(([0.0, 0.1, 0.5], [float(rho.rho_d(v0)), u_top, u_top]), v0, 0.05, 1e-3, cs)
    xs, fs = rho.table(DRAINAGE)
    ref = 0.0
    for u, v in zip(loop.u[1:], loop.v[1:]):
        gap = u - np.interp(v, xs, fs)
        ref += 1e-3 * max(gap, 0.0) ** 2
    E = an.tau_mismatch(loop, rho, 0.05)
    assert E > 0
    assert E == pytest.approx(ref, rel=1e-12)


def test_mismatch_bound_holds_for_overshoot():
    cfg = parse_config(preset="drainage-drive", run_id="d", nodes=51, t_final=0.05)
    from hystera.presets import run_drainage

    res = run_drainage(cfg)
    assert 0 < res.report["E"] <= res.extra["bound"]


# -- interpolants ---------------------------------------------------------------


def test_interpolants_at_knots(redis_run):
    traj = redis_run.traj
    t3 = traj.times[3]
    for kind in ("hat", "bar"):
        np.testing.assert_array_equal(an.interpolant_eval(traj, kind, t3), traj.states[3].u)
    mid = 0.5 * (traj.times[3] + traj.times[4])
    np.testing.assert_allclose(
        an.interpolant_eval(traj, "bar", mid, field="v"), 0.5 * (traj.v[3] + traj.v[4]), rtol=1e-14
    )
    assert an.interpolant_eval(traj, "hat", mid, node=10) == traj.u[4][10]
    assert an.interpolant_eval(traj, "check", mid, node=10) == traj.u[3][10]


def test_interpolant_errors(redis_run):
    with pytest.raises(DomainError):
        an.interpolant_eval(redis_run.traj, "bar", -0.1)
    with pytest.raises(ValueError):
        an.interpolant_eval(redis_run.traj, "spline", 0.01)


def test_interpolant_identity(redis_run):
    traj, g = redis_run.traj, redis_run.grid
    hb, ch = an.interpolant_integrals(traj, g)
    A = an.energy_ledger(traj, g).A
    assert hb == pytest.approx(traj.dt / 3 * A, rel=1e-12)
    assert ch == pytest.approx(traj.dt * A, rel=1e-12)


# -- 0-D loops -----------------------------------------------------------------


def test_constant_forcing_inside_band():
    cs = parse_config(preset="scan-loop", run_id="x").constitutive()
    v0 = 0.8
    u = 0.5 * float(cs.rho.rho_i(v0) + cs.rho.rho_d(v0))
    loop = an.scan_loop_0d(([0.0, 1.0], [u, u]), v0, 0.1, 1e-2, cs)
    assert np.all(loop.v == v0)
    assert an.band_constancy(loop, cs.rho) == (0.0, 100)


def _affine_rho():
    # rho_d(v) = 0.5 - v/2 on [0, 2]; rho_i(v) = 0.25 - v/2 on [-0.5, 1.5]
    return RhoCurves(np.array([-0.5, 0.5]), np.array([1.5, -0.5]), np.array([2.0, 0.0]), -0.5, 0.5, 0.0, 2.0)


def test_step_forcing_exact_recursion():
    """Affine drainage curve: implicit Euler error shrinks by 1/(1 + dt|s|/tau) per step."""
    rho = _affine_rho()
    tau, dt, s = 0.1, 1e-3, -0.5
    u, v = 0.45, 0.2  # above rho_d(0.2) = 0.4
    v_star = (u - 0.5) / s  # rho_d(v_star) = u
    vs = [v]
    for _ in range(200):
        vs.append(an.implicit_rate_step(u, vs[-1], dt, tau, rho))
    n = np.arange(201)
    closed = v_star + (0.2 - v_star) * (1 + dt * abs(s) / tau) ** (-n)
    np.testing.assert_allclose(vs, closed, atol=1e-14)
    # Continuous relaxation rate |s| / tau, recovered to O(dt).
    cont = v_star + (0.2 - v_star) * np.exp(-abs(s) * n * dt / tau)
    assert np.max(np.abs(np.array(vs) - cont)) < 5 * dt * abs(s) / tau * abs(0.2 - v_star)


def test_step_forcing_real_tables():
    cs = parse_config(preset="scan-loop", run_id="x").constitutive(0.05)
    rho = cs.rho
    v0 = 0.7
    _, s0 = rho.segment(DRAINAGE, v0)
    u = float(rho.rho_d(v0)) + 1e-3
    T = 20 * cs.tau / abs(s0)
    dt = 1e-3
    T = dt * math.ceil(T / dt)
    loop = an.scan_loop_0d(([0.0, dt, T], [u, u, u]), v0, cs.tau, dt, cs)
    assert abs(u - rho.rho_d(loop.v[-1])) < 1e-6
    assert np.all(np.diff(loop.v) <= 0)  # drains monotonically


def test_implicit_step_exact_root():
    cs = parse_config(preset="scan-loop", run_id="x").constitutive()
    rho = cs.rho
    for u, v in [(0.3, 0.5), (0.0, 0.9), (-0.01, 0.6)]:
        vn = an.implicit_rate_step(u, v, 1e-2, 0.1, rho)
        r, _ = an._rate_and_slope(u, vn, 0.1, rho)
        assert abs(vn - v - 1e-2 * r) < 1e-15


def test_scan_loop_domain():
    cs = parse_config(preset="scan-loop", run_id="x").constitutive()
    with pytest.raises(DomainError):
        an.scan_loop_0d(([0, 1], [0.0, 0.5]), 0.8, 0.1, 0.01, cs)
    with pytest.raises(DomainError):
        an.scan_loop_0d(([0, 1], [0.0, 0.1]), 1.2, 0.1, 0.01, cs)


def test_loop_area_square():
    S = np.array([0.0, 1.0, 1.0, 0.0])
    p = np.array([0.0, 0.0, 2.0, 2.0])
    assert an.loop_area(S, p) == 2.0
    assert an.loop_area(S[::-1], p[::-1]) == 2.0


def test_triangle_wave():
    t, u = an.triangle_wave(0.0, 1.0, 4.0, 2)
    assert t[-1] == 8.0 and u[0] == 0.5 and u[1] == 1.0 and u[-1] == 0.5


# -- sweeps -----------------------------------------------------------------------


def test_sweep_table_slope():
    taus = [0.1, 0.01, 0.001]
    table = an.SweepTable([an.SweepRow(t, 3.0 * t, 1.0) for t in taus])
    assert table.slope() == pytest.approx(1.0)
    s, (lo, hi) = table.slope_interval()
    assert s == pytest.approx(1.0)
    assert lo <= 1.0 + 1e-12 and hi >= 1.0 - 1e-12
    assert table.E_decreasing() and table.B_ratio == 1.0


def test_sweep_all_band_is_degenerate():
    table = an.SweepTable([an.SweepRow(t, 0.0, 1.0) for t in (0.1, 0.01, 0.001)])
    assert table.degenerate and math.isnan(table.slope())


def test_sweep_csv(tmp_path):
    table = an.SweepTable([an.SweepRow(t, t**1.1, 2.0) for t in (0.1, 0.01, 0.001)])
    path = tmp_path / "sweep.csv"
    table.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "tau,E,B,slope_running"
    assert rows[1].endswith(",nan")
    assert float(rows[3].split(",")[-1]) == pytest.approx(1.1)


def _member(tau):
    if tau == 0.01:
        raise RuntimeError("boom")
    return an.SweepRow(tau, tau, 1.0)


@pytest.mark.parametrize("jobs", [1, 2])
def test_sweep_marks_aborted_members(jobs):
    table = an.tau_sweep(_member, [0.1, 0.01, 0.001], jobs=jobs)
    assert [r.tau for r in table.rows] == [0.1, 0.01, 0.001]
    assert table.rows[1].status.startswith("aborted")
    assert table.slope() == pytest.approx(1.0)


@pytest.mark.parametrize("taus", [[0.1, 0.01], [0.1, 0.1, 0.01], [0.1, -0.01, 0.001]])
def test_sweep_tau_list_validation(taus):
    with pytest.raises(ValueError):
        an.validate_tau_list(taus)


def test_report_csv(tmp_path):
    rep = an.DiagnosticsReport()
    rep["tau"] = 0.1
    rep.add_check(an.CheckResult("x", False, 0.5, 0.0))
    path = tmp_path / "d.csv"
    rep.to_csv(path)
    assert path.read_text().splitlines() == ["key,value", "tau,0.1", "check_x,fail", "worst_x,0.5"]
    assert not rep.passed and rep.failures[0].name == "x"
    assert rep.failures[0].line().startswith("FAIL x")
