"""Rothe time stepping with a fixed-point inner solver.

Each step freezes the diffusivity and the flux at the previous time level and
iterates the map ``B``: a linear elliptic solve for ``u`` with the rate term
taken from the current iterate, followed by an explicit pointwise update of
``v``. ``B`` is a contraction for small enough ``dt``; when it is not, the
step size is halved.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .errors import (
    NonContractionError,
    NumericError,
    PreconditionError,
    SolverAbort,
    StateCorruptionError,
)
from .grid import assemble_step_system, grad_norm_sq, lumped_mass, stiffness

LINEAR_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping controls.

    ``tau``, ``delta`` and ``mu`` are recorded here for provenance; the
    values that act are those baked into the :class:`ConstitutiveSet`.
    """

    dt: float = 1e-3
    t_final: float = 0.1
    eps_fp: float = 1e-10
    max_iter: int = 200
    max_halvings: int = 20
    tau: float = 0.1
    delta: float = 1e-3
    mu: float = 1e-3
    gravity: tuple = (0.0,)
    flux: bool = False
    rebase_on_halving: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final >= 0:
            raise ValueError("t_final must be non-negative")
        if not self.eps_fp > 0:
            raise ValueError("eps_fp must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be non-negative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "gravity", tuple(float(g) for g in np.atleast_1d(self.gravity)))

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))


@dataclass
class State:
    """Nodal ``u`` and ``v`` at one time level, with ``p = b^{-1}(u)`` cached."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray = None

    @property
    def S(self):
        return self.v - self.u

    def with_pressure(self, constitutive):
        if self.p is None:
            self.p = np.asarray(constitutive.pressure(self.u), dtype=float)
        return self

    def copy(self):
        return State(self.u.copy(), self.v.copy(), None if self.p is None else self.p.copy())


@dataclass
class StepReport:
    t: float
    iters: int
    residual: float
    contraction: float
    dt: float
    linear_iters: int = 0
    residuals: list = field(default_factory=list, repr=False)


@dataclass
class Trajectory:
    """Accepted states at ``t_n = n dt`` and one report per step."""

    times: list
    states: list
    reports: list
    dt: float
    halvings: int = 0
    wall_time: float = 0.0

    def __len__(self):
        return len(self.states)

    def _stack(self, name):
        return np.array([getattr(s, name) for s in self.states])

    @property
    def u(self):
        return self._stack("u")

    @property
    def v(self):
        return self._stack("v")

    @property
    def S(self):
        return self._stack("S")

    @property
    def p(self):
        return self._stack("p")

    @property
    def t(self):
        return np.asarray(self.times)

    @property
    def final(self):
        return self.states[-1]

    def write_csv(self, traj_path, steps_path, grid):
        """Write ``<run_id>_traj.csv`` and ``<run_id>_steps.csv`` style files."""
        x = grid.x
        with open(traj_path, "w", newline="\n") as fh:
            fh.write("t,node_index,x,u,v,S,p\n")
            for t, s in zip(self.times, self.states):
                S = s.S
                p = s.p if s.p is not None else np.full(s.u.shape, np.nan)
                for i in range(s.u.size):
                    fh.write(f"{t!r},{i},{x[i]!r},{s.u[i]!r},{s.v[i]!r},{S[i]!r},{p[i]!r}\n")
        with open(steps_path, "w", newline="\n") as fh:
            fh.write("t,iters,residual,contraction,dt\n")
            for r in self.reports:
                fh.write(f"{r.t!r},{r.iters},{r.residual!r},{r.contraction!r},{r.dt!r}\n")


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def solve_linear(system, rhs, info=False):
    """Solve a condensed SPD system.

    Tridiagonal systems use banded elimination plus one refinement sweep if
    needed; everything else uses Jacobi-preconditioned conjugate gradients.

    Parameters
    ----------
    system : SparseOperator or ndarray
    rhs : ndarray
    info : bool
        Also return the iteration count (0 for the direct path).
    """
    rhs = np.asarray(rhs, dtype=float)
    A = system.matrix if hasattr(system, "matrix") else system
    bnorm = float(np.linalg.norm(rhs))
    target = LINEAR_RTOL * bnorm
    banded = getattr(system, "banded", None)
    if banded is not None:
        x = scipy.linalg.solve_banded((1, 1), banded, rhs, check_finite=False)
        r = rhs - A @ x
        if np.linalg.norm(r) > target:
            x = x + scipy.linalg.solve_banded((1, 1), banded, r, check_finite=False)
            r = rhs - A @ x
        if np.linalg.norm(r) > target:
            raise NumericError(f"tridiagonal solve residual {np.linalg.norm(r):.3e} above {target:.3e}")
        iters = 0
    else:
        if bnorm == 0.0:
            x, iters = np.zeros_like(rhs), 0
        else:
            d = A.diagonal() if hasattr(A, "diagonal") else np.diag(A)
            M = spla.LinearOperator(A.shape, matvec=lambda y: y / d)
            count = [0]

            def cb(_):
                count[0] += 1

            x, status = spla.cg(A, rhs, rtol=LINEAR_RTOL * 0.1, atol=0.0, M=M, maxiter=20 * rhs.size + 100, callback=cb)
            iters = count[0]
            res = float(np.linalg.norm(rhs - A @ x))
            if status != 0 or res > target:
                raise NumericError(
                    f"conjugate gradients stagnated after {iters} iterations "
                    f"(residual {res:.3e}, target {target:.3e})"
                )
    return (x, iters) if info else x


# ---------------------------------------------------------------------------
# One step
# ---------------------------------------------------------------------------


@dataclass
class _StepContext:
    """Everything frozen at ``t_{n-1}`` for one step."""

    prev: State
    dt: float
    op: object
    load: np.ndarray
    mass: np.ndarray
    K1: object
    D_min: float
    interior: np.ndarray


def _check_finite(state, what):
    for name in ("u", "v"):
        arr = getattr(state, name)
        if not np.all(np.isfinite(arr)):
            i = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise StateCorruptionError(f"non-finite {name}[{i}] = {arr[i]!r} in {what}")


def prepare_step(prev, dt, config, grid, constitutive, mass=None, K1=None):
    prev.with_pressure(constitutive)
    D = np.asarray(constitutive.diffusivity(prev.u, prev.v, prev.p), dtype=float)
    F = None
    if config.flux and any(config.gravity):
        F = constitutive.flux(prev.u, prev.v, config.gravity[: grid.dim])
    op, load = assemble_step_system(grid, D, F, dt, mass=mass)
    return _StepContext(
        prev=prev,
        dt=dt,
        op=op,
        load=load,
        mass=lumped_mass(grid) if mass is None else mass,
        K1=stiffness(grid) if K1 is None else K1,
        D_min=float(D.min()),
        interior=grid.interior,
    )


def _apply_B(ctx, iterate, constitutive):
    _check_finite(iterate, "fixed-point iterate")
    prev, dt, m, inner = ctx.prev, ctx.dt, ctx.mass, ctx.interior
    rate = constitutive.phi(iterate.u, iterate.v)
    rhs = (m * (prev.u + dt * rate))[inner] + dt * ctx.load
    sol, lin_iters = solve_linear(ctx.op, rhs, info=True)
    u = np.zeros_like(prev.u)
    u[inner] = sol
    v = prev.v + dt * rate
    return State(u, v), lin_iters


def inner_map_B(prev, iterate, config, grid, constitutive, context=None):
    """One application of the fixed-point map for the step leaving ``prev``.

    Returns
    -------
    State
        ``(u*, v*)``.
    """
    ctx = context or prepare_step(prev, config.dt, config, grid, constitutive)
    return _apply_B(ctx, iterate, constitutive)[0]


def _fp_norm(du, dv, ctx):
    a = float(np.dot(ctx.mass, du * du))
    g = grad_norm_sq(du, None, ctx.K1)
    b = float(np.dot(ctx.mass, dv * dv))
    return math.sqrt(max(a + 2.0 * ctx.dt * ctx.D_min * g + b, 0.0))


def fixed_point_solve(prev, config, grid, constitutive, dt=None, context=None, t=0.0):
    """Iterate ``B`` from ``prev`` to the tolerance ``config.eps_fp``.

    The residual is the step between successive iterates in the norm
    ``sqrt(||du||^2 + 2 dt D_m ||grad du||^2 + ||dv||^2)``.

    Raises
    ------
    NonContractionError
        If the residual stops decreasing or ``max_iter`` is exhausted.
    """
    dt = config.dt if dt is None else dt
    ctx = context or prepare_step(prev, dt, config, grid, constitutive)
    current = State(prev.u, prev.v)
    residuals = []
    lin_total = 0
    for k in range(1, config.max_iter + 1):
        nxt, lin = _apply_B(ctx, current, constitutive)
        lin_total += lin
        r = _fp_norm(nxt.u - current.u, nxt.v - current.v, ctx)
        residuals.append(r)
        current = nxt
        ratio = residuals[-1] / residuals[-2] if k >= 2 and residuals[-2] > 0 else 0.0
        if r <= config.eps_fp:
            report = StepReport(t, k, r, ratio, dt, lin_total, residuals)
            _check_finite(current, "converged state")
            return current, report
        if k >= 2 and ratio >= 1.0:
            report = StepReport(t, k, r, ratio, dt, lin_total, residuals)
            raise NonContractionError(
                f"fixed-point residual ratio {ratio:.3f} >= 1 at iteration {k} (dt={dt:.3e})", report
            )
    report = StepReport(t, config.max_iter, residuals[-1], ratio, dt, lin_total, residuals)
    raise NonContractionError(
        f"fixed-point iteration did not reach {config.eps_fp:.1e} in {config.max_iter} iterations "
        f"(residual {residuals[-1]:.3e}, dt={dt:.3e})",
        report,
    )


# ---------------------------------------------------------------------------
# Time march
# ---------------------------------------------------------------------------


def check_initial_state(initial, grid, constitutive, atol=0.0):
    """Boundary pinning and the band condition ``rho_i(v0) <= u0 <= rho_d(v0)``."""
    _check_finite(initial, "initial state")
    if np.any(initial.u[grid.boundary] != 0.0):
        raise PreconditionError("initial u must vanish on Dirichlet nodes")
    rho = constitutive.rho
    lo = rho.rho_i(initial.v)
    hi = rho.rho_d(initial.v)
    bad = (initial.u < lo - atol) | (initial.u > hi + atol)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PreconditionError(
            f"initial pressure at node {i} is not between the main curves: "
            f"u={initial.u[i]:.6g} outside [{lo[i]:.6g}, {hi[i]:.6g}]"
        )


def time_march(initial, config, grid, constitutive, check_initial=True, on_step=None):
    """Run the Rothe scheme from ``initial`` up to ``config.t_final``.

    Parameters
    ----------
    check_initial : bool
        Enforce the band condition on the initial data. Presets that start
        off the main-curve band on purpose switch this off.
    on_step : callable, optional
        ``on_step(t, state, report)`` after every accepted step.

    Returns
    -------
    Trajectory
        With ``config.rebase_on_halving`` (the default) every step of the
        returned run uses the same, final ``dt``; otherwise accepted steps are
        kept and only the remainder of the run uses the halved ``dt``.

    Raises
    ------
    SolverAbort
        When ``max_halvings`` halvings of ``dt`` do not restore contraction.
    """
    if check_initial:
        check_initial_state(initial, grid, constitutive)
    else:
        _check_finite(initial, "initial state")
    start = time.perf_counter()
    dt = config.dt
    n_total = config.n_steps
    if n_total and not math.isclose(n_total * dt, config.t_final, rel_tol=1e-9, abs_tol=1e-15):
        raise ValueError("t_final must be a multiple of dt")
    mass = lumped_mass(grid)
    K1 = stiffness(grid)
    first = initial.copy().with_pressure(constitutive)
    times, states, reports = [0.0], [first], []
    halvings = 0
    n = 0
    while n < n_total:
        state = states[-1]
        t = (n + 1) * dt
        try:
            ctx = prepare_step(state, dt, config, grid, constitutive, mass=mass, K1=K1)
            new, report = fixed_point_solve(state, config, grid, constitutive, dt=dt, context=ctx, t=t)
        except NonContractionError as exc:
            halvings += 1
            if halvings > config.max_halvings:
                rep = exc.report
                dump = {
                    "t": t,
                    "dt": dt,
                    "residuals": None if rep is None else list(rep.residuals),
                    "u": state.u.copy(),
                    "v": state.v.copy(),
                }
                raise SolverAbort(f"giving up after {config.max_halvings} dt halvings: {exc}", dump) from exc
            dt *= 0.5
            n_total *= 2
            if config.rebase_on_halving:
                times, states, reports = [0.0], [first], []
                n = 0
            else:
                n *= 2
            continue
        new.with_pressure(constitutive)
        n += 1
        times.append(t)
        states.append(new)
        reports.append(report)
        if on_step is not None:
            on_step(t, new, report)
    return Trajectory(times, states, reports, dt, halvings, time.perf_counter() - start)
