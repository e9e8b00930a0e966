"""Flat ``key=value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key has a default (some
depend on the preset); unknown keys and out-of-range values are rejected
with the offending line number.
"""

import datetime
import math
from dataclasses import dataclass, fields

from .errors import ConfigError

PRESETS = ("equilibrium", "redistribution", "drainage-drive", "scan-loop", "tau-sweep")


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# name -> (parser, validator or None, message)
_pos = (lambda x: x > 0, "must be positive")
_nonneg = (lambda x: x >= 0, "must be non-negative")
_unit = (lambda x: 0 <= x <= 1, "must lie in [0, 1]")


@dataclass
class RunConfig:
    """Every parameter of a run, validated.

    Grid keys: ``length``, ``nodes`` (and ``length_y``/``nodes_y`` for 2D).
    Stepper keys mirror :class:`hystera.stepper.StepperConfig`. Preset keys
    shape the initial data.
    """

    preset: str = "redistribution"
    run_id: str = ""
    out_dir: str = "."
    # constitutive
    alpha_i: float = 1.0
    alpha_d: float = 2.0
    n_i: float = 2.0
    n_d: float = 2.0
    p_offset: float = 0.5
    k0: float = 0.0
    mu: float = 1e-3
    delta: float = 1e-3
    tau: float = 0.1
    n_rho: int = 4096
    # grid
    length: float = 1.0
    nodes: int = 101
    length_y: float = 0.0
    nodes_y: int = 0
    # stepper
    dt: float = 1e-3
    t_final: float = 0.05
    eps_fp: float = 1e-10
    max_iter: int = 200
    max_halvings: int = 20
    gravity: tuple = (0.0,)
    flux: bool = False
    rebase_on_halving: bool = True
    dt_tau_ratio: float = 0.0
    # redistribution data
    p_left: float = -0.2
    p_right: float = 0.6
    theta_left: float = 0.95
    theta_right: float = 0.05
    width: float = 0.05
    # equilibrium data
    theta_eq: float = 0.5
    # drainage-drive data
    drive_p: float = -0.1
    drive_excess: float = 0.01
    theta_boundary: float = 0.99
    # scan-loop data
    loop_low_frac: float = 0.005
    loop_high_frac: float = 0.95
    loop_v0: float = 0.7
    loop_period: float = 10.0
    loop_cycles: int = 2
    loop_dt: float = 1e-3
    # sweeps
    tau_list: tuple = (0.1, 0.01, 0.001)
    # checks
    tol_bounds: float = 1e-8
    growth_ceiling: float = 10.0
    slope_min: float = 0.9
    slope_max: float = 1.3
    b_ratio_max: float = 5.0
    bound_slack: float = 2.0
    traj_every: int = 1

    def stepper_config(self, tau=None):
        from .stepper import StepperConfig

        tau = self.tau if tau is None else tau
        dt = self.dt
        if self.dt_tau_ratio > 0:
            dt = min(dt, self.dt_tau_ratio * tau)
            # Keep t_final a multiple of dt.
            dt = self.t_final / math.ceil(self.t_final / dt - 1e-9) if self.t_final > 0 else dt
        return StepperConfig(
            dt=dt,
            t_final=self.t_final,
            eps_fp=self.eps_fp,
            max_iter=self.max_iter,
            max_halvings=self.max_halvings,
            tau=tau,
            delta=self.delta,
            mu=self.mu,
            gravity=self.gravity,
            flux=self.flux,
            rebase_on_halving=self.rebase_on_halving,
        )

    def constitutive(self, tau=None):
        from .constitutive import ConstitutiveSet

        return ConstitutiveSet.build(
            alpha_i=self.alpha_i,
            alpha_d=self.alpha_d,
            n_i=self.n_i,
            n_d=self.n_d,
            p_offset=self.p_offset,
            k0=self.k0,
            mu=self.mu,
            delta=self.delta,
            tau=self.tau if tau is None else tau,
            n_rho=self.n_rho,
        )

    def grid(self):
        from .grid import build_grid

        if self.nodes_y:
            return build_grid((self.length, self.length_y or self.length), (self.nodes, self.nodes_y))
        return build_grid(self.length, self.nodes)

    def echo(self):
        """Effective configuration as ``key=value`` lines."""
        return "".join(f"{f.name}={_fmt_value(getattr(self, f.name))}\n" for f in fields(self))

    def write_echo(self, directory):
        import os

        path = os.path.join(directory, f"{self.run_id}_config.txt")
        with open(path, "w", newline="\n") as fh:
            fh.write(self.echo())
        return path


# Defaults that differ per preset.
PRESET_DEFAULTS = {
    "equilibrium": {"t_final": 0.02},
    "redistribution": {},
    "drainage-drive": {"t_final": 0.3, "dt_tau_ratio": 0.25, "tau": 0.01},
    "scan-loop": {},
    "tau-sweep": {"t_final": 0.3, "dt_tau_ratio": 0.25},
}

_CHECKS = {
    "alpha_i": _pos,
    "alpha_d": _pos,
    "n_i": (lambda x: x > 1, "must exceed 1"),
    "n_d": (lambda x: x > 1, "must exceed 1"),
    "p_offset": _nonneg,
    "k0": _nonneg,
    "mu": (lambda x: 0 <= x < 1, "must lie in [0, 1)"),
    "delta": _nonneg,
    "tau": _pos,
    "n_rho": (lambda x: x >= 8, "must be at least 8"),
    "length": _pos,
    "nodes": (lambda x: x >= 3, "must be at least 3"),
    "length_y": _nonneg,
    "nodes_y": (lambda x: x == 0 or x >= 3, "must be 0 (1D) or at least 3"),
    "dt": _pos,
    "t_final": _nonneg,
    "eps_fp": _pos,
    "max_iter": (lambda x: x >= 1, "must be at least 1"),
    "max_halvings": _nonneg,
    "dt_tau_ratio": _nonneg,
    "theta_left": _unit,
    "theta_right": _unit,
    "theta_eq": _unit,
    "theta_boundary": _unit,
    "width": _nonneg,
    "drive_excess": _nonneg,
    "loop_low_frac": _unit,
    "loop_high_frac": _unit,
    "loop_period": _pos,
    "loop_cycles": (lambda x: x >= 1, "must be at least 1"),
    "loop_dt": _pos,
    "tol_bounds": _nonneg,
    "b_ratio_max": _pos,
    "bound_slack": _pos,
    "traj_every": (lambda x: x >= 1, "must be at least 1"),
    "tau_list": (lambda x: len(x) >= 3 and all(t > 0 for t in x) and all(b < a for a, b in zip(x, x[1:])),
                 "needs at least 3 positive, strictly decreasing values"),
    "preset": (lambda x: x in PRESETS, f"must be one of {', '.join(PRESETS)}"),
}


def _parser_for(f):
    t = type(f.default)
    if t is bool:
        return _bool
    if t is int:
        return int
    if t is float:
        return float
    if t is tuple:
        return _floats
    return str


def parse_config(text="", preset=None, **overrides):
    """Parse ``key=value`` text into a validated :class:`RunConfig`.

    Parameters
    ----------
    text : str
        Configuration text.
    preset : str, optional
        Preset whose defaults apply before the text; a ``preset=`` line in
        the text must agree with it.
    overrides : dict
        Applied after the text (used by the CLI and sweeps).

    Raises
    ------
    ConfigError
        With the 1-based line number of the offending line when known.
    """
    by_name = {f.name: f for f in fields(RunConfig)}
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in by_name:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _parser_for(by_name[key])(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
        lines[key] = lineno

    name = preset or values.get("preset") or RunConfig.preset
    if preset and "preset" in values and values["preset"] != preset:
        raise ConfigError(f"config names preset {values['preset']!r} but {preset!r} was requested", lines["preset"])
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}", lines.get("preset"))
    merged = dict(PRESET_DEFAULTS[name])
    merged.update(values)
    merged.update(overrides)
    merged["preset"] = name
    for key, val in merged.items():
        check = _CHECKS.get(key)
        if check is not None and not check[0](val):
            raise ConfigError(f"{key}={_fmt_value(val)} {check[1]}", lines.get(key))
    if not merged.get("run_id"):
        merged["run_id"] = name + "_" + datetime.datetime.now().strftime("%Y%m%dT%H%M%S")
    cfg = RunConfig(**merged)
    if cfg.t_final > 0 and cfg.dt_tau_ratio == 0:
        n = cfg.t_final / cfg.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError("t_final must be a multiple of dt", lines.get("t_final") or lines.get("dt"))
    return cfg
