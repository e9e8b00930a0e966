"""Diagnostics computed from completed runs.

The checks here compare a trajectory against the bounds and estimates the
continuous model is known to satisfy: invariant boxes for ``u``, ``v`` and
``S``, the energy ledger of the time-discrete scheme, the hysteresis
mismatch and its scaling in ``tau``, and the time interpolants used to pass
to the limit. They report; they never raise on a failed property.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .constitutive import DRAINAGE, IMBIBITION
from .errors import DomainError, NumericError
from .grid import grad_norm_sq, lumped_mass, stiffness

# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    """Outcome of one property check.

    ``worst`` is the largest violation found (``<= 0`` means inside the
    bounds with that much room).
    """

    name: str
    passed: bool
    worst: float
    tol: float
    extrema: dict = field(default_factory=dict)
    note: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst violation {self.worst:.3e} (tol {self.tol:.1e}){' ' + self.note if self.note else ''}"


class DiagnosticsReport:
    """Ordered key/value store written as ``key,value`` rows."""

    def __init__(self):
        self._items = {}
        self.checks = []

    def __setitem__(self, key, value):
        self._items[key] = value

    def __getitem__(self, key):
        return self._items[key]

    def __contains__(self, key):
        return key in self._items

    def items(self):
        return self._items.items()

    def add_check(self, check):
        self.checks.append(check)
        self._items[f"check_{check.name}"] = "pass" if check.passed else "fail"
        self._items[f"worst_{check.name}"] = check.worst
        return check

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("key,value\n")
            for k, v in self._items.items():
                fh.write(f"{k},{_fmt(v)}\n")


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fields(traj, name):
    arr = np.asarray(getattr(traj, name), dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


# ---------------------------------------------------------------------------
# Invariant regions
# ---------------------------------------------------------------------------


def _interval_violation(values, lo, hi):
    return float(max(lo - np.min(values), np.max(values) - hi))


def check_box_bounds(traj, bounds, tol=1e-8):
    """``u`` in ``[u_l, u_r]`` and ``v`` in ``[v_l, v_r]`` at every node and step."""
    U, V = _fields(traj, "u"), _fields(traj, "v")
    wu = _interval_violation(U, bounds.u_l, bounds.u_r)
    wv = _interval_violation(V, bounds.v_l, bounds.v_r)
    worst = max(wu, wv)
    ext = {"u_min": float(U.min()), "u_max": float(U.max()), "v_min": float(V.min()), "v_max": float(V.max())}
    return CheckResult("box_bounds", worst <= tol, worst, tol, ext)


def check_saturation_bounds(traj, bounds, constitutive, tol=1e-8):
    """``S`` in ``[S_l, S_r]`` and ``p`` in ``[p_c^i(S_r), p_c^d(S_l)]``.

    Also confirms ``mu < S_l``; otherwise the permeability cut acts on the
    orbit and a warning is issued.
    """
    S = _fields(traj, "S")
    P = _fields(traj, "p")
    curves = constitutive.curves
    p_lo = float(curves.pressure("imbibition", bounds.S_r))
    p_hi = float(curves.pressure("drainage", bounds.S_l))
    ws = _interval_violation(S, bounds.S_l, bounds.S_r)
    wp = _interval_violation(P, p_lo, p_hi)
    worst = max(ws, wp)
    mu = constitutive.perm.mu
    mu_ok = mu < bounds.S_l
    note = ""
    if not mu_ok:
        note = f"mu={mu:g} >= S_l={bounds.S_l:.6g}: permeability cut active on the orbit"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    ext = {
        "S_min": float(S.min()),
        "S_max": float(S.max()),
        "p_min": float(P.min()),
        "p_max": float(P.max()),
        "p_lower": p_lo,
        "p_upper": p_hi,
        "mu_below_S_l": mu_ok,
    }
    return CheckResult("saturation_bounds", bool(worst <= tol and mu_ok), worst, tol, ext, note)


# ---------------------------------------------------------------------------
# Energy ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyLedger:
    A: float
    B: float
    M_inf: float


def energy_ledger(traj, grid):
    """Increment sum ``A``, gradient sum ``B`` and peak norm ``M_inf``."""
    m = lumped_mass(grid)
    K = stiffness(grid)
    U, V = traj.u, traj.v
    dU = np.diff(U, axis=0)
    dV = np.diff(V, axis=0)
    A = float(np.sum(dU * dU @ m) + np.sum(dV * dV @ m)) if len(U) > 1 else 0.0
    B = float(traj.dt * sum(grad_norm_sq(u, grid, K) for u in U[1:]))
    M = float(np.max(U * U @ m + V * V @ m))
    return EnergyLedger(A, B, M)


def growth_slope(traj, grid):
    """Least-squares slope of ``log(||u||^2 + ||v||^2)`` against ``t``."""
    if len(traj) < 3:
        return 0.0
    m = lumped_mass(grid)
    q = traj.u**2 @ m + traj.v**2 @ m
    return float(np.polyfit(traj.t, np.log(np.maximum(q, 1e-300)), 1)[0])


# ---------------------------------------------------------------------------
# Hysteresis mismatch
# ---------------------------------------------------------------------------


def mismatch_density(u, v, rho):
    """``[u - rho_d(v)]_+^2 + [rho_i(v) - u]_+^2`` pointwise."""
    top = np.maximum(u - rho.rho_d(v), 0.0)
    bottom = np.maximum(rho.rho_i(v) - u, 0.0)
    return top * top + bottom * bottom


def tau_mismatch(traj, rho, tau=None, grid=None, mass=None):
    """Right-endpoint sum ``E = sum_n dt ||mismatch(u_n, v_n)||^2``.

    ``tau`` is not used in the sum; it is accepted so call sites read like
    the quantity they compute. Works for 0-D runs (weights default to 1).
    """
    U, V = _fields(traj, "u"), _fields(traj, "v")
    w = mass if mass is not None else (lumped_mass(grid) if grid is not None else np.ones(U.shape[1]))
    dens = mismatch_density(U[1:], V[1:], rho)
    return float(traj.dt * np.sum(dens @ w))


def mismatch_bound(traj, rho, tau, grid):
    """``tau * (||u_0||^2 / 2 + || R_d(v_T) - R_d(v_0) ||_1)`` with ``R_d' = rho_d``."""
    m = lumped_mass(grid)
    u0, v0, vT = traj.states[0].u, traj.states[0].v, traj.states[-1].v
    R = rho.primitive("drainage", vT) - rho.primitive("drainage", v0)
    return float(tau * (0.5 * np.dot(m, u0 * u0) + np.dot(m, np.abs(R))))


# ---------------------------------------------------------------------------
# Interpolants
# ---------------------------------------------------------------------------


def interpolant_eval(traj, kind, t, node=None, field="u"):
    """Evaluate a time interpolant of ``field`` at time ``t``.

    ``hat`` is right-constant (``w_n`` on ``(t_{n-1}, t_n]``), ``check`` is
    left-constant (``w_{n-1}`` there) and ``bar`` is piecewise linear.
    """
    times = traj.t
    T = times[-1]
    if not (0.0 <= t <= T * (1 + 1e-15)):
        raise DomainError(f"t={t!r} outside [0, {T!r}]")
    W = _fields(traj, field)
    if len(times) == 1:
        w = W[0]
        return w if node is None else w[node]
    dt = traj.dt
    if t <= 0.0:
        n = 1
    else:
        n = min(max(int(math.ceil(t / dt - 1e-12)), 1), len(times) - 1)
    if kind == "hat":
        w = W[n] if t > 0 else W[0]
    elif kind == "check":
        w = W[n - 1]
        if t >= times[n] and n < len(times) - 1:
            w = W[n]
    elif kind == "bar":
        if t == times[n]:
            w = W[n]
        else:
            s = (t - times[n - 1]) / dt
            w = W[n - 1] + s * (W[n] - W[n - 1])
    else:
        raise ValueError(f"unknown interpolant kind {kind!r}; use hat, check or bar")
    return w if node is None else w[node]


_GL_X, _GL_W = np.polynomial.legendre.leggauss(3)


def interpolant_integrals(traj, grid):
    """``int ||hat - bar||^2`` and ``int ||check - hat||^2`` over the run.

    Both integrands are polynomials of degree <= 2 on each step, so 3-point
    Gauss quadrature inside each interval is exact.
    """
    m = lumped_mass(grid)
    times = traj.t
    hb = 0.0
    ch = 0.0
    for n in range(1, len(times)):
        a, b = times[n - 1], times[n]
        for xg, wg in zip(_GL_X, _GL_W):
            t = 0.5 * (a + b) + 0.5 * (b - a) * xg
            wq = 0.5 * (b - a) * wg
            for f in ("u", "v"):
                hat = interpolant_eval(traj, "hat", t, field=f)
                bar = interpolant_eval(traj, "bar", t, field=f)
                chk = interpolant_eval(traj, "check", t, field=f)
                hb += wq * np.dot(m, (hat - bar) ** 2)
                ch += wq * np.dot(m, (chk - hat) ** 2)
    return float(hb), float(ch)


# ---------------------------------------------------------------------------
# 0-D scanning loops
# ---------------------------------------------------------------------------


@dataclass
class ScanLoop:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    S: np.ndarray
    p: np.ndarray
    dt: float
    tau: float


def triangle_wave(u_low, u_high, period, cycles, start="up"):
    """Knots of a triangle wave starting at the midpoint."""
    mid = 0.5 * (u_low + u_high)
    q = period / 4.0
    seq = [u_high, mid, u_low, mid] if start == "up" else [u_low, mid, u_high, mid]
    ts, us = [0.0], [mid]
    for c in range(int(cycles)):
        for k, target in enumerate(seq):
            ts.append(ts[-1] + q)
            us.append(target)
    return np.array(ts), np.array(us)


def scan_loop_0d(forcing, v0, tau, dt, constitutive):
    """Integrate ``dv/dt = Phi_tau(u(t), v)`` with implicit Euler for a prescribed ``u(t)``.

    Parameters
    ----------
    forcing : (array_like, array_like)
        Knots ``(t_k, u_k)`` of a piecewise-linear ``u(t)``.
    v0 : float
        Initial ``v`` inside ``(V_m, V_M)``.
    tau, dt : float
    constitutive : ConstitutiveSet

    Returns
    -------
    ScanLoop
        With ``S = v - u`` and ``p = b^{-1}(u)``.

    Notes
    -----
    The implicit equation ``v - v_old - dt Phi(u, v) = 0`` is strictly
    increasing in ``v``; it is solved by bracketing. When ``Phi(u, v_old)``
    vanishes, ``v_old`` is the root and is returned unchanged.
    """
    rho = constitutive.rho
    tk, uk = (np.asarray(a, dtype=float) for a in forcing)
    if np.any(np.diff(tk) <= 0):
        raise ValueError("forcing times must increase")
    if np.any(uk < rho.U_m) or np.any(uk > rho.U_M):
        raise DomainError(f"forcing must stay in [U_m, U_M] = [{rho.U_m:.6g}, {rho.U_M:.6g}]")
    if not (rho.V_m < v0 < rho.V_M):
        raise DomainError(f"v0 must lie in (V_m, V_M) = ({rho.V_m:.6g}, {rho.V_M:.6g})")
    if not tau > 0 or not dt > 0:
        raise ValueError("tau and dt must be positive")
    n = int(round((tk[-1] - tk[0]) / dt))
    t = tk[0] + dt * np.arange(n + 1)
    u = np.interp(t, tk, uk)
    v = np.empty(n + 1)
    v[0] = v0
    ul = u.tolist()
    for k in range(1, n + 1):
        v[k] = implicit_rate_step(ul[k], float(v[k - 1]), dt, tau, rho)
    S = v - u
    p = np.asarray(constitutive.pressure(u), dtype=float)
    return ScanLoop(t, u, v, S, p, dt, tau)


def _rate_and_slope(u, v, tau, rho):
    """Scalar ``Phi_tau(u, v)`` and its one-sided ``v``-derivative."""
    rd, sd = rho.segment(DRAINAGE, v)
    if u > rd:
        return (rd - u) / tau, sd / tau
    ri, si = rho.segment(IMBIBITION, v)
    if u < ri:
        return (ri - u) / tau, si / tau
    return 0.0, 0.0


def implicit_rate_step(u, v_old, dt, tau, rho, max_iter=200):
    """Root of ``g(v) = v - v_old - dt Phi_tau(u, v)``.

    ``g`` is piecewise linear with slope ``>= 1``, so safeguarded Newton
    lands exactly on the root once it reaches the right table segment.
    Returns ``v_old`` itself when the rate vanishes there.
    """
    r0, _ = _rate_and_slope(u, v_old, tau, rho)
    if r0 == 0.0:
        return v_old
    lo, hi = (v_old + dt * r0, v_old) if r0 < 0 else (v_old, v_old + dt * r0)
    v = v_old + dt * r0
    for _ in range(max_iter):
        r, s = _rate_and_slope(u, v, tau, rho)
        g = v - v_old - dt * r
        if g == 0.0:
            return v
        if g > 0:
            hi = v
        else:
            lo = v
        nv = v - g / (1.0 - dt * s)
        if not (lo < nv < hi):
            nv = 0.5 * (lo + hi)
        if nv == v or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(v)):
            return nv
        v = nv
    raise NumericError(f"implicit rate step did not converge (u={u!r}, v_old={v_old!r})")


def band_constancy(loop, rho):
    """Largest ``|v_n - v_{n-1}|`` over steps whose ``u_n`` is strictly inside the band of ``v_{n-1}``."""
    vo = loop.v[:-1]
    un = loop.u[1:]
    inside = (un > rho.rho_i(vo)) & (un < rho.rho_d(vo))
    if not inside.any():
        return 0.0, 0
    return float(np.max(np.abs(np.diff(loop.v)[inside]))), int(inside.sum())


def loop_area(S, p):
    """Absolute shoelace area of the closed polygon through ``(S, p)``."""
    S = np.asarray(S, dtype=float)
    p = np.asarray(p, dtype=float)
    return float(0.5 * abs(np.dot(S, np.roll(p, -1)) - np.dot(p, np.roll(S, -1))))


def last_cycle(loop, period):
    """Slice of ``loop`` covering its final forcing period."""
    k = int(round(period / loop.dt))
    return slice(len(loop.t) - 1 - k, len(loop.t))


# ---------------------------------------------------------------------------
# tau sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    tau: float
    E: float
    B: float
    bound: float = float("nan")
    status: str = "ok"


@dataclass
class SweepTable:
    rows: list

    @property
    def taus(self):
        return np.array([r.tau for r in self.rows])

    @property
    def E(self):
        return np.array([r.E for r in self.rows])

    @property
    def B(self):
        return np.array([r.B for r in self.rows])

    def _usable(self, upto=None):
        rows = self.rows if upto is None else self.rows[:upto]
        return [r for r in rows if r.status == "ok" and r.E > 0 and np.isfinite(r.E)]

    def slope(self, upto=None):
        """Least-squares slope of ``log E`` against ``log tau`` (NaN if degenerate)."""
        rows = self._usable(upto)
        if len(rows) < 2:
            return float("nan")
        x = np.log([r.tau for r in rows])
        y = np.log([r.E for r in rows])
        return float(np.polyfit(x, y, 1)[0])

    def slope_interval(self, level=0.95):
        """Slope with a two-sided confidence interval from the regression."""
        rows = self._usable()
        if len(rows) < 3:
            s = self.slope()
            return s, (float("nan"), float("nan"))
        fit = stats.linregress(np.log([r.tau for r in rows]), np.log([r.E for r in rows]))
        q = stats.t.ppf(0.5 + level / 2, len(rows) - 2)
        return float(fit.slope), (float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr))

    @property
    def degenerate(self):
        return len(self._usable()) < 2

    @property
    def B_ratio(self):
        B = np.array([r.B for r in self.rows if r.status == "ok"])
        if B.size == 0 or np.min(B) <= 0:
            return float("inf") if B.size and np.max(B) > 0 else float("nan")
        return float(np.max(B) / np.min(B))

    def E_decreasing(self):
        E = np.array([r.E for r in self.rows if r.status == "ok"])
        return bool(np.all(np.diff(E) < 0))

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("tau,E,B,slope_running\n")
            for i, r in enumerate(self.rows):
                if r.status != "ok":
                    fh.write(f"{r.tau!r},{r.status},{r.status},nan\n")
                    continue
                fh.write(f"{r.tau!r},{r.E!r},{r.B!r},{self.slope(upto=i + 1)!r}\n")


def validate_tau_list(taus):
    taus = [float(t) for t in taus]
    if len(taus) < 3:
        raise ValueError("a tau sweep needs at least 3 values")
    if any(t <= 0 for t in taus):
        raise ValueError("tau values must be positive")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau values must be strictly decreasing")
    return taus


def tau_sweep(run_member, taus, jobs=1):
    """Run ``run_member(tau) -> SweepRow`` for each ``tau`` and tabulate.

    Members that raise are recorded with ``status='aborted'``. With
    ``jobs > 1`` the members run in a process pool; row order always follows
    ``taus``.
    """
    taus = validate_tau_list(taus)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_member, t) for t in taus]
            rows = [_collect(f.result, t) for f, t in zip(futures, taus)]
    else:
        rows = [_collect(lambda t=t: run_member(t), t) for t in taus]
    return SweepTable(rows)


def _collect(call, tau):
    try:
        return call()
    except Exception as exc:  # member failures become table markers
        return SweepRow(tau, float("nan"), float("nan"), status=f"aborted:{type(exc).__name__}")
