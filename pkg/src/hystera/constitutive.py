"""Pointwise closure relations of the extended play-type hysteresis model.

Everything here is a function of a single point in state space: capillary
pressure curves, relative permeability, the play map ``u = b(p)`` and its
regularisation, the rho-curves that describe the main imbibition/drainage
curves in the ``(v, u)`` plane, and the rate operator that drives ``v``.

Sign conventions: ``p`` is capillary pressure (suction), ``S`` saturation,
``u = b(p)`` and ``v = S + u``.
"""

import bisect
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConstitutiveInconsistencyError, DomainError, PreconditionError
from .quadrature import adaptive_simpson

IMBIBITION = "imbibition"
DRAINAGE = "drainage"
BRANCHES = (IMBIBITION, DRAINAGE)

_BRANCH_ALIASES = {
    "imbibition": IMBIBITION,
    "i": IMBIBITION,
    "wetting": IMBIBITION,
    "drainage": DRAINAGE,
    "d": DRAINAGE,
    "drying": DRAINAGE,
}

QUAD_TOL = 1e-10
TOL_INV = 1e-10
TOL_TABLE = 1e-6
DEFAULT_N_RHO = 4096


def branch_name(branch):
    try:
        return _BRANCH_ALIASES[str(branch).lower()]
    except KeyError:
        raise ValueError(f"unknown branch {branch!r}; use 'imbibition' or 'drainage'") from None


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


# ---------------------------------------------------------------------------
# Capillary pressure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CapillaryCurvePair:
    """Van Genuchten imbibition/drainage pair.

    ``p_c(S) = alpha * (S**(-1/m) - 1)**(1/n) - p_offset`` with ``m = 1 - 1/n``.
    ``p_offset`` shifts both curves so that the boundary value ``p = 0`` can lie
    strictly between them; with the default ``0`` both curves vanish at
    ``S = 1``.
    """

    alpha_i: float = 1.0
    alpha_d: float = 2.0
    n_i: float = 2.0
    n_d: float = 2.0
    p_offset: float = 0.0

    def __post_init__(self):
        for name in ("alpha_i", "alpha_d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("n_i", "n_d"):
            if not getattr(self, name) > 1:
                raise ValueError(f"{name} must exceed 1")
        if not self.p_offset >= 0:
            raise ValueError("p_offset must be non-negative")

    def params(self, branch):
        if branch_name(branch) == IMBIBITION:
            alpha, n = self.alpha_i, self.n_i
        else:
            alpha, n = self.alpha_d, self.n_d
        return alpha, n, 1.0 - 1.0 / n

    @property
    def p_min(self):
        """Common value ``p_c(1)`` of both curves."""
        return -self.p_offset

    def pressure(self, branch, S):
        S_arr = np.asarray(S, dtype=float)
        if np.any(~(S_arr > 0.0)) or np.any(S_arr > 1.0):
            raise DomainError("capillary pressure is defined for 0 < S <= 1 only")
        alpha, n, m = self.params(branch)
        x = np.maximum(S_arr ** (-1.0 / m) - 1.0, 0.0)
        return _scalar_or_array(alpha * x ** (1.0 / n) - self.p_offset, S)

    def slope(self, branch, S):
        """``d p_c / dS``; tends to ``-inf`` at both ends of ``(0, 1)``."""
        S_arr = np.asarray(S, dtype=float)
        if np.any(~(S_arr > 0.0)) or np.any(S_arr > 1.0):
            raise DomainError("capillary pressure is defined for 0 < S <= 1 only")
        alpha, n, m = self.params(branch)
        x = np.maximum(S_arr ** (-1.0 / m) - 1.0, 0.0)
        with np.errstate(divide="ignore"):
            out = -(alpha / (n * m)) * S_arr ** (-1.0 / m - 1.0) * x ** (1.0 / n - 1.0)
        return _scalar_or_array(out, S)

    def saturation(self, branch, p):
        """Inverse curve ``S = p_c^{-1}(p)`` for ``p >= p_c(1)``."""
        p_arr = np.asarray(p, dtype=float)
        if np.any(~(p_arr >= self.p_min)):
            raise DomainError(f"capillary pressure {self.p_min:g} is the curve minimum")
        alpha, n, m = self.params(branch)
        r = (p_arr - self.p_min) / alpha
        return _scalar_or_array((1.0 + r**n) ** (-m), p)

    def dsat_dp(self, branch, p):
        """``1 / p_c'(p_c^{-1}(p))`` written in terms of ``p``; zero for ``p <= p_c(1)``."""
        alpha, n, m = self.params(branch)
        r = np.maximum((np.asarray(p, dtype=float) - self.p_min) / alpha, 0.0)
        out = -(m * n / alpha) * r ** (n - 1.0) * (1.0 + r**n) ** (-m - 1.0)
        return _scalar_or_array(out, p)


DEFAULT_CURVES = CapillaryCurvePair()


def pc_eval(branch, S, curves=DEFAULT_CURVES):
    """Capillary pressure on one branch, ``0 < S <= 1``."""
    return curves.pressure(branch, S)


def pc_inverse(branch, p, curves=DEFAULT_CURVES):
    """Saturation on one branch at pressure ``p >= p_c(1)``."""
    return curves.saturation(branch, p)


# ---------------------------------------------------------------------------
# Relative permeability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PermeabilityCurve:
    """Mualem relative permeability with floor ``k0`` and low-saturation cut ``mu``."""

    m: float = 0.5
    k0: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if not 0 < self.m < 1:
            raise ValueError("Mualem exponent m must lie in (0, 1)")
        if self.k0 < 0:
            raise ValueError("k0 must be non-negative")
        if not 0 <= self.mu < 1:
            raise ValueError("mu must lie in [0, 1)")

    def base(self, S):
        s = np.clip(np.asarray(S, dtype=float), 0.0, 1.0)
        kr = np.sqrt(s) * (1.0 - (1.0 - s ** (1.0 / self.m)) ** self.m) ** 2
        return kr + self.k0

    def __call__(self, S):
        s = np.asarray(S, dtype=float)
        if self.mu > 0:
            s = np.maximum(s, self.mu)
        return _scalar_or_array(self.base(s), S)

    @property
    def floor(self):
        return float(self(0.0))


def rel_perm(S, perm=PermeabilityCurve()):
    return perm(S)


# ---------------------------------------------------------------------------
# Play map
# ---------------------------------------------------------------------------


class PlayMap:
    """Monotone map ``u = b_delta(p)`` defining the scanning lines ``S + b(p) = const``.

    The unregularised slope is half the smaller of the two branch slopes
    ``|dS/dp|``, which makes the consistency margin exactly one half. For
    ``delta > 0`` the slope is replaced by ``delta`` outside ``[p_l, p_r]``,
    the outermost points where ``b'`` equals ``delta``.

    Values are obtained by adaptive Simpson quadrature of the slope, started
    from a cumulative table at knots that include every kink of ``b'``.
    """

    def __init__(self, curves=DEFAULT_CURVES, delta=0.0, n_knots=1200, quad_tol=QUAD_TOL):
        if delta < 0:
            raise ValueError("delta must be non-negative")
        self.curves = curves
        self.delta = float(delta)
        self.quad_tol = quad_tol
        self.p_min = curves.p_min
        # Tail of b beyond p_cap is bounded by min_j S_j(p_cap) / 2.
        s_tail = 2.0 * quad_tol
        self.p_cap = min(curves.pressure(IMBIBITION, s_tail), curves.pressure(DRAINAGE, s_tail))
        self._build(n_knots)

    # -- slopes -----------------------------------------------------------

    def base_derivative(self, p):
        """Unregularised slope ``b'(p)``."""
        p_arr = np.asarray(p, dtype=float)
        di = self.curves.dsat_dp(IMBIBITION, p_arr)
        dd = self.curves.dsat_dp(DRAINAGE, p_arr)
        out = -0.5 * np.maximum(di, dd)
        return _scalar_or_array(out, p)

    def derivative(self, p):
        """Regularised slope ``b_delta'(p)``."""
        p_arr = np.asarray(p, dtype=float)
        out = self.base_derivative(p_arr)
        if self.delta > 0:
            outside = (p_arr < self.p_l) | (p_arr > self.p_r)
            out = np.where(outside, self.delta, out)
        return _scalar_or_array(out, p)

    # -- construction -----------------------------------------------------

    def _crossover(self):
        """Pressure where the two branch slopes swap order (a kink of ``b'``)."""
        def gap(p):
            return self.curves.dsat_dp(IMBIBITION, p) - self.curves.dsat_dp(DRAINAGE, p)

        qs = self.p_min + np.geomspace(1e-6, self.p_cap - self.p_min, 4000)
        g = gap(qs)
        idx = np.nonzero(np.sign(g[1:]) != np.sign(g[:-1]))[0]
        return [brentq(gap, qs[k], qs[k + 1], xtol=1e-14, rtol=1e-15) for k in idx]

    def _build(self, n_knots):
        span = self.p_cap - self.p_min
        q = np.geomspace(1e-7 * span, span, n_knots)
        knots = [self.p_min, *(self.p_min + q), *self._crossover()]
        # Locate the maximum slope (b_M) on a fine grid, then polish.
        grid = np.unique(np.asarray(knots))
        dens = self.base_derivative(grid)
        k = int(np.argmax(dens))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        fine = np.linspace(lo, hi, 2001)
        self.p_peak = float(fine[np.argmax(self.base_derivative(fine))])
        self.b_max = float(self.base_derivative(self.p_peak))

        if self.delta > 0:
            if self.delta >= self.b_max:
                raise ValueError(f"delta={self.delta} must be below max b' = {self.b_max:.4g}")
            f = lambda p: self.base_derivative(p) - self.delta  # noqa: E731
            left = grid[grid <= self.p_peak]
            right = grid[grid >= self.p_peak]
            il = np.nonzero(self.base_derivative(left) < self.delta)[0]
            ir = np.nonzero(self.base_derivative(right) < self.delta)[0]
            a = left[il[-1]]
            self.p_l = brentq(f, a, left[il[-1] + 1] if il[-1] + 1 < left.size else self.p_peak, xtol=1e-15)
            if ir.size == 0:
                raise ValueError("delta too small: b' stays above delta up to p_cap")
            self.p_r = brentq(f, right[ir[0] - 1], right[ir[0]], xtol=1e-14)
            inner = grid[(grid > self.p_l) & (grid < self.p_r)]
            if np.any(self.base_derivative(inner) < self.delta):
                raise ValueError("b' dips below delta inside [p_l, p_r]; choose a smaller delta")
            knots = [self.p_l, self.p_r, *inner]
        else:
            self.p_l, self.p_r = -math.inf, math.inf
        if self.p_min < 0 < self.p_cap and (self.delta == 0 or self.p_l < 0 < self.p_r):
            knots.append(0.0)
        self.knots = np.unique(np.asarray(knots, dtype=float))
        pieces = adaptive_simpson(
            self.derivative, self.knots[:-1], self.knots[1:], tol=self.quad_tol / self.knots.size
        )
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        self._cum = cum
        # Anchor so that b_delta(0) = 0.
        self._cum = cum - self._integral_from_knots(np.array([0.0]))[0]

        if self.delta == 0:
            self.U_m = float(self.value(self.p_min))
            self.U_M = float(self.value(self.p_cap))
        else:
            self.U_m, self.U_M = -math.inf, math.inf

    # -- evaluation -------------------------------------------------------

    def _integral_from_knots(self, p):
        k = np.clip(np.searchsorted(self.knots, p, side="right") - 1, 0, self.knots.size - 1)
        start = self.knots[k]
        return self._cum[k] + adaptive_simpson(self.derivative, start, p, tol=self.quad_tol)

    def value(self, p):
        """``b_delta(p) = int_0^p b_delta'``."""
        p_arr = np.atleast_1d(np.asarray(p, dtype=float))
        if not np.all(np.isfinite(p_arr)):
            raise DomainError("play map needs finite pressures")
        out = self._integral_from_knots(p_arr)
        return _scalar_or_array(out.reshape(np.shape(p)), p)

    __call__ = value

    def inverse(self, u, tol=TOL_INV):
        """Pressure ``p`` with ``b_delta(p) = u``."""
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        if not np.all(np.isfinite(u_arr)):
            raise DomainError("play map inverse needs finite values")
        if self.delta == 0 and (np.any(u_arr <= self.U_m) or np.any(u_arr >= self.U_M)):
            raise DomainError(
                f"u must lie strictly inside (U_m, U_M) = ({self.U_m:.6g}, {self.U_M:.6g}) "
                "for the unregularised play map"
            )
        vals = self._cum
        k = np.searchsorted(vals, u_arr, side="right") - 1
        lo = np.where(k >= 0, self.knots[np.clip(k, 0, None)], np.nan)
        hi = np.where(k + 1 < self.knots.size, self.knots[np.clip(k + 1, None, self.knots.size - 1)], np.nan)
        if self.delta > 0:
            # Linear continuation outside the knot range.
            below = k < 0
            above = k + 1 >= self.knots.size
            lo = np.where(below, self.knots[0] + (u_arr - vals[0]) / self.delta - 1.0, lo)
            hi = np.where(below, self.knots[0], hi)
            lo = np.where(above, self.knots[-1], lo)
            hi = np.where(above, self.knots[-1] + (u_arr - vals[-1]) / self.delta + 1.0, hi)
        else:
            hi = np.where(k + 1 >= self.knots.size, self.p_cap * 4.0, hi)
        # Start from the chord of the cumulative table; Newton then needs a step or two.
        inside = (k >= 0) & (k + 1 < self.knots.size)
        p = np.where(inside, np.interp(u_arr, vals, self.knots), 0.5 * (lo + hi))
        if self.delta > 0:
            # b_delta is affine beyond the outer knots.
            p = np.where(k < 0, self.knots[0] + (u_arr - vals[0]) / self.delta, p)
            p = np.where(k + 1 >= self.knots.size, self.knots[-1] + (u_arr - vals[-1]) / self.delta, p)
        for _ in range(200):
            res = self.value(p) - u_arr
            conv = np.abs(res) <= tol
            if conv.all():
                break
            lo = np.where(res < 0, p, lo)
            hi = np.where(res > 0, p, hi)
            slope = self.derivative(p)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = p - res / slope
            ok = (newton > lo) & (newton < hi) & np.isfinite(newton)
            p = np.where(conv, p, np.where(ok, newton, 0.5 * (lo + hi)))
            if np.all(conv | (hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(p)))):
                break
        return _scalar_or_array(p.reshape(np.shape(u)), u)

    def consistency_margin(self, branch, S):
        """``b'(p_c(S)) * |p_c'(S)|``; the consistency criterion needs this in (0, 1)."""
        p = self.curves.pressure(branch, S)
        return self.base_derivative(p) * np.abs(self.curves.slope(branch, S))


def play_eval(p, delta=0.0, play=None):
    play = play if play is not None else _default_play(delta)
    return play.value(p)


def play_inverse(u, delta=0.0, play=None):
    play = play if play is not None else _default_play(delta)
    return play.inverse(u)


_PLAY_CACHE = {}


def _default_play(delta):
    key = float(delta)
    if key not in _PLAY_CACHE:
        _PLAY_CACHE[key] = PlayMap(DEFAULT_CURVES, delta=key)
    return _PLAY_CACHE[key]


# ---------------------------------------------------------------------------
# Rho curves
# ---------------------------------------------------------------------------


@dataclass
class RhoCurves:
    """Main curves in the ``(v, u)`` plane, tabulated on a uniform ``u``-grid.

    ``rho_i`` and ``rho_d`` are decreasing on ``[V_m, V_M]`` and extended by
    constants outside it. Evaluation is piecewise-linear.
    """

    u_grid: np.ndarray
    v_i: np.ndarray
    v_d: np.ndarray
    U_m: float
    U_M: float
    V_m: float
    V_M: float
    M_rho: float = field(init=False)

    def __post_init__(self):
        self._xp = {IMBIBITION: self.v_i[::-1].copy(), DRAINAGE: self.v_d[::-1].copy()}
        self._fp = self.u_grid[::-1].copy()
        self._xp_list = {b: xp.tolist() for b, xp in self._xp.items()}
        self._fp_list = self._fp.tolist()
        slopes = []
        for xp in self._xp.values():
            slopes.append(np.max(np.abs(np.diff(self._fp) / np.diff(xp))))
        self.M_rho = float(max(slopes))
        self._prim = {}
        for b, xp in self._xp.items():
            seg = 0.5 * (self._fp[1:] + self._fp[:-1]) * np.diff(xp)
            self._prim[b] = np.concatenate([[0.0], np.cumsum(seg)])

    def rho(self, branch, v):
        b = branch_name(branch)
        out = np.interp(np.asarray(v, dtype=float), self._xp[b], self._fp)
        return _scalar_or_array(out, v)

    def segment(self, branch, v):
        """Scalar ``(rho(v), rho'(v))`` on the table segment containing ``v``.

        The slope is one-sided from the right at knots and zero on the flat
        extensions. Pure-Python path for tight scalar loops.
        """
        b = branch_name(branch)
        xs = self._xp_list[b]
        fs = self._fp_list
        if v <= xs[0]:
            return fs[0], 0.0
        if v >= xs[-1]:
            return fs[-1], 0.0
        k = bisect.bisect_right(xs, v) - 1
        x0, x1 = xs[k], xs[k + 1]
        f0, f1 = fs[k], fs[k + 1]
        slope = (f1 - f0) / (x1 - x0)
        return f0 + slope * (v - x0), slope

    def rho_i(self, v):
        return self.rho(IMBIBITION, v)

    def rho_d(self, v):
        return self.rho(DRAINAGE, v)

    def primitive(self, branch, v):
        """``int_{V_m}^{v} rho(s) ds`` for the piecewise-linear table, exact."""
        b = branch_name(branch)
        xp, fp, cum = self._xp[b], self._fp, self._prim[b]
        v_arr = np.asarray(v, dtype=float)
        vc = np.clip(v_arr, xp[0], xp[-1])
        k = np.clip(np.searchsorted(xp, vc, side="right") - 1, 0, xp.size - 2)
        inner = cum[k] + 0.5 * (fp[k] + np.interp(vc, xp, fp)) * (vc - xp[k])
        out = inner + fp[0] * np.minimum(v_arr - xp[0], 0.0) + fp[-1] * np.maximum(v_arr - xp[-1], 0.0)
        return _scalar_or_array(out, v)

    def table(self, branch):
        """``(v, rho)`` samples in increasing ``v``."""
        b = branch_name(branch)
        return self._xp[b].copy(), self._fp.copy()


def build_rho_tables(play, n_rho=DEFAULT_N_RHO):
    """Tabulate the rho-curves for an unregularised play map.

    For each branch ``v_j(u) = p_c^{-1}(b^{-1}(u)) + u`` is sampled on a
    uniform ``u``-grid over ``[U_m, U_M]`` and inverted piecewise-linearly.
    """
    if play.delta != 0:
        raise ValueError("rho curves are defined through the unregularised play map (delta=0)")
    if n_rho < 8:
        raise ValueError("n_rho must be at least 8")
    curves = play.curves
    s = np.linspace(1e-4, 1.0 - 1e-4, 10_000)
    for b in BRANCHES:
        margin = play.consistency_margin(b, s)
        if not np.all((margin > 0) & (margin < 1)):
            raise ConstitutiveInconsistencyError(f"consistency criterion violated on the {b} branch")

    U_m, U_M = play.U_m, play.U_M
    u = np.linspace(U_m, U_M, n_rho)
    p = np.empty_like(u)
    p[1:-1] = play.inverse(u[1:-1])
    tables = {}
    for b in BRANCHES:
        v = np.empty_like(u)
        v[1:-1] = curves.saturation(b, p[1:-1]) + u[1:-1]
        v[0] = 1.0 + U_m
        v[-1] = U_M
        if not np.all(np.diff(v) < 0):
            raise ConstitutiveInconsistencyError(f"v({b}) table is not strictly decreasing in u")
        tables[b] = v
    return RhoCurves(u, tables[IMBIBITION], tables[DRAINAGE], U_m, U_M, V_m=U_M, V_M=1.0 + U_m)


# ---------------------------------------------------------------------------
# Rate operator
# ---------------------------------------------------------------------------


def phi_tau(u, v, tau, rho):
    """Rate of ``v``: relaxation towards the band ``rho_i(v) <= u <= rho_d(v)``."""
    if not np.all(np.asarray(tau) > 0):
        raise ValueError("tau must be positive")
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    rd = rho.rho_d(v_arr)
    ri = rho.rho_i(v_arr)
    out = -(np.maximum(u_arr - rd, 0.0) / tau) - (np.minimum(u_arr - ri, 0.0) / tau)
    # ``+ 0.0`` turns the -0.0 of the band interior into +0.0.
    out = out + 0.0
    return float(out) if out.ndim == 0 else out


def phi_tau_branch(u, v, tau, rho):
    """Three-case form of :func:`phi_tau`, kept as an independent cross-check."""
    u_arr, v_arr, t_arr = np.broadcast_arrays(
        np.asarray(u, dtype=float), np.asarray(v, dtype=float), np.asarray(tau, dtype=float)
    )
    rd = rho.rho_d(v_arr)
    ri = rho.rho_i(v_arr)
    out = np.zeros(u_arr.shape)
    top = u_arr > rd
    bottom = u_arr < ri
    out[top] = (rd[top] - u_arr[top]) / t_arr[top]
    out[bottom] = (ri[bottom] - u_arr[bottom]) / t_arr[bottom]
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Invariant region
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxBounds:
    u_l: float
    u_r: float
    v_l: float
    v_r: float
    S_l: float
    S_r: float


def box_bounds(u_range, v_range, rho, tau=1.0):
    """Invariant rectangle spanned by the initial ``v``-range.

    ``u_r = rho_d(v_l)`` and ``u_l = rho_i(v_r)`` are the corners where the
    rate operator vanishes.
    """
    u0_min, u0_max = map(float, u_range)
    v_l, v_r = map(float, v_range)
    if not (rho.V_m < v_l <= v_r < rho.V_M):
        raise PreconditionError(
            f"v-range [{v_l:.6g}, {v_r:.6g}] must lie inside (V_m, V_M) = ({rho.V_m:.6g}, {rho.V_M:.6g})"
        )
    u_r = float(rho.rho_d(v_l))
    u_l = float(rho.rho_i(v_r))
    if u0_min < u_l or u0_max > u_r:
        raise PreconditionError(
            f"initial u-range [{u0_min:.6g}, {u0_max:.6g}] leaves [{u_l:.6g}, {u_r:.6g}]: "
            "initial pressure is not between the main curves"
        )
    corners = phi_tau(np.array([u_r, u_l]), np.array([v_l, v_r]), tau, rho)
    if np.any(corners != 0.0):
        raise AssertionError("rate operator does not vanish at the box corners")
    return BoxBounds(u_l=u_l, u_r=u_r, v_l=v_l, v_r=v_r, S_l=v_l - u_r, S_r=v_r - u_l)


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------


@dataclass
class ConstitutiveSet:
    """All closure data needed by the stepper, built once and then read-only."""

    curves: CapillaryCurvePair
    perm: PermeabilityCurve
    play: PlayMap
    rho: RhoCurves
    tau: float

    @classmethod
    def build(
        cls,
        alpha_i=1.0,
        alpha_d=2.0,
        n_i=2.0,
        n_d=2.0,
        p_offset=0.0,
        k0=0.0,
        mu=0.0,
        delta=0.0,
        tau=0.1,
        n_rho=DEFAULT_N_RHO,
        perm_m=None,
    ):
        if not tau > 0:
            raise ValueError("tau must be positive")
        curves = CapillaryCurvePair(alpha_i, alpha_d, n_i, n_d, p_offset)
        perm = PermeabilityCurve(m=perm_m if perm_m is not None else 1.0 - 1.0 / n_i, k0=k0, mu=mu)
        base = _cached_play(curves, 0.0)
        rho = _cached_rho(curves, n_rho)
        play = base if delta == 0 else _cached_play(curves, delta)
        return cls(curves, perm, play, rho, float(tau))

    @property
    def base_play(self):
        return _cached_play(self.curves, 0.0)

    def with_tau(self, tau):
        return ConstitutiveSet(self.curves, self.perm, self.play, self.rho, float(tau))

    def phi(self, u, v):
        return phi_tau(u, v, self.tau, self.rho)

    def pressure(self, u):
        return self.play.inverse(u)

    def diffusivity(self, u, v, p=None):
        """``k(v - u) / b_delta'(b_delta^{-1}(u))``; pass ``p`` if already known."""
        if p is None:
            p = self.play.inverse(u)
        return self.perm(np.asarray(v) - np.asarray(u)) / self.play.derivative(p)

    def flux(self, u, v, g):
        return np.multiply.outer(self.perm(np.asarray(v) - np.asarray(u)), np.atleast_1d(g))


_PLAY_MAPS = {}
_RHO_TABLES = {}


def _cached_play(curves, delta):
    key = (curves, float(delta))
    if key not in _PLAY_MAPS:
        _PLAY_MAPS[key] = PlayMap(curves, delta=delta)
    return _PLAY_MAPS[key]


def _cached_rho(curves, n_rho):
    key = (curves, int(n_rho))
    if key not in _RHO_TABLES:
        _RHO_TABLES[key] = build_rho_tables(_cached_play(curves, 0.0), n_rho)
    return _RHO_TABLES[key]
