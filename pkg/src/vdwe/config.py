"""Run configuration: flat ``section.key = value`` text, parsed and validated up front.

Every violation found is reported together, each tagged with the line it
came from, so a bad file can be fixed in one pass.
"""

import dataclasses
import difflib
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidParametersError

EXPERIMENT_KINDS = ("run", "convergence", "cone-test", "eos-check", "background-check", "inequality-suite")
FORMULATIONS = ("isentropic", "general")


@dataclass
class GasSection:
    b: float = 0.5
    R: float = 1.0
    c_v: float = 0.5


@dataclass
class GridSection:
    d: int = 1
    N: int = 2048
    box: float = 114.0
    T_end: float = 50.0


@dataclass
class SchemeSection:
    order: int = 4
    cfl: float = 0.4
    mu: float = 0.02
    positivity_tolerance: float = 1e-2
    formulation: str = "isentropic"
    # None selects the largest admissible value min(1, (gamma0-1)/2)
    theta: float = None
    # damping rate of the absorbing layer in the boundary buffer (0 disables it)
    sponge: float = 5.0


@dataclass
class InitSection:
    eps: float = 1e-2
    eps_s: float = 0.0
    R_support: float = 1.0
    velocity: str = "linear"
    scale: float = None
    alpha: float = None
    omega: float = None
    width: float = None

    def velocity_params(self):
        keys = ("scale", "alpha", "omega", "width")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}


@dataclass
class DiagnosticsSection:
    m: int = 3
    output_interval: float = 0.05
    fit_lo: float = 5.0
    fit_hi: float = 50.0
    slack: float = 0.2
    calibration_window: float = 1.0
    buffer_fraction: float = 0.05
    buffer_threshold: float = 1e-12
    buffer_action: str = "abort"
    positivity_check: float = 1e-10
    conservation_tolerance: float = 1e-8
    sup_norm_window: float = 1.0
    snapshot_interval: float = 0.0


@dataclass
class ExperimentSection:
    kind: str = "run"
    seed: int = 0
    cone_x0: float = 0.0
    cone_radius: float = 3.0
    cone_control: str = "outside"
    cone_levels: str = "256,512,1024"
    samples: int = 100


@dataclass
class SimulationConfig:
    gas: GasSection = field(default_factory=GasSection)
    grid: GridSection = field(default_factory=GridSection)
    scheme: SchemeSection = field(default_factory=SchemeSection)
    init: InitSection = field(default_factory=InitSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def replace(self, **sections):
        """Copy with whole sections or ``section__key`` overrides replaced."""
        out = dataclasses.replace(self)
        for name in dataclasses.fields(self):
            setattr(out, name.name, dataclasses.replace(getattr(self, name.name)))
        for key, value in sections.items():
            if "__" in key:
                sec, attr = key.split("__", 1)
                setattr(getattr(out, sec), attr, value)
            else:
                setattr(out, key, value)
        return out

    def gas_parameters(self):
        from .thermo import derive_constants

        return derive_constants(self.gas.b, self.gas.R, self.gas.c_v)

    def theta(self):
        if self.scheme.theta is not None:
            return self.scheme.theta
        g0 = 1.0 + self.gas.R / self.gas.c_v
        return min(1.0, 0.5 * (g0 - 1.0))

    def digest(self):
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()[:16]


def _sections(cfg=None):
    cfg = cfg or SimulationConfig()
    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}


def valid_keys():
    keys = []
    for sec, obj in _sections().items():
        keys += [f"{sec}.{f.name}" for f in dataclasses.fields(obj)]
    return keys


def _field_type(obj, name):
    default = getattr(type(obj)(), name)
    annot = {f.name: f.type for f in dataclasses.fields(obj)}[name]
    if isinstance(annot, str):
        annot = {"float": float, "int": int, "str": str}[annot]
    return annot, default


def _coerce(text, typ, allow_none):
    text = text.strip()
    if allow_none and text.lower() in ("none", "auto", ""):
        return None
    if typ is int:
        return int(text)
    if typ is float:
        val = float(text)
        if not np.isfinite(val):
            raise ValueError("non-finite value")
        return val
    return text


def _format(value):
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg):
    lines = []
    for sec, obj in _sections(cfg).items():
        for f in dataclasses.fields(obj):
            lines.append(f"{sec}.{f.name} = {_format(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config(text):
    """Parse and validate; raise :class:`ConfigError` listing every violation."""
    cfg = SimulationConfig()
    sections = _sections(cfg)
    errors = []
    lines_of = {}
    keys = valid_keys()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in keys:
            near = difflib.get_close_matches(key, keys, n=1, cutoff=0.0)
            hint = f"; did you mean '{near[0]}'?" if near else ""
            errors.append(f"line {lineno}: unknown key '{key}'{hint}")
            continue
        sec, name = key.split(".", 1)
        obj = sections[sec]
        typ, default = _field_type(obj, name)
        try:
            setattr(obj, name, _coerce(value, typ, allow_none=default is None))
        except ValueError:
            errors.append(f"line {lineno}: '{key}' expects {typ.__name__}, got {value!r}")
            continue
        lines_of[key] = lineno
    errors += validate_config(cfg, lines_of)
    if errors:
        raise ConfigError(errors)
    return cfg


def validate_config(cfg, lines_of=None):
    """Return the list of violated preconditions (empty when the config is usable)."""
    lines_of = lines_of or {}
    errors = []

    def err(key, msg):
        where = f"line {lines_of[key]}: " if key in lines_of else ""
        errors.append(f"{where}{key}: {msg}")

    gas = None
    try:
        gas = cfg.gas_parameters()
    except InvalidParametersError as exc:
        key = "gas.c_v" if "c_v" in str(exc) else ("gas.R" if "R " in str(exc) else "gas.b")
        err(key, f"invalid parameters: {exc}")

    g = cfg.grid
    if g.d not in (1, 2):
        err("grid.d", "dimension must be 1 or 2")
    if g.N < 8 or g.N & (g.N - 1):
        err("grid.N", "cells per axis must be a power of two >= 8")
    if not g.box > 0:
        err("grid.box", "box length must be positive")
    if not g.T_end > 0:
        err("grid.T_end", "T_end must be positive")

    s = cfg.scheme
    if s.order != 4:
        err("scheme.order", "only the fourth-order scheme is implemented")
    if not 0 < s.cfl <= 1:
        err("scheme.cfl", "CFL number must lie in (0, 1]")
    if s.mu < 0:
        err("scheme.mu", "hyperviscosity must be >= 0")
    if s.sponge < 0:
        err("scheme.sponge", "sponge rate must be >= 0")
    if s.positivity_tolerance < 0:
        err("scheme.positivity_tolerance", "must be >= 0")
    if s.formulation not in FORMULATIONS:
        err("scheme.formulation", f"must be one of {FORMULATIONS}")
    if gas is not None and s.formulation == "general":
        upper = min(1.0, 0.5 * (gas.gamma0 - 1.0))
        th = cfg.theta()
        if not 0 < th <= upper * (1.0 + 1e-12):
            err("scheme.theta", f"theta must lie in (0, min(1, (gamma0-1)/2)] = (0, {upper:g}]")

    i = cfg.init
    if i.eps < 0:
        err("init.eps", "amplitude must be >= 0")
    if not i.R_support > 0:
        err("init.R_support", "support radius must be positive")
    velocity = None
    try:
        from .background import InitialVelocity, check_H3

        velocity = InitialVelocity(i.velocity, g.d if g.d in (1, 2) else 1, **i.velocity_params())
        probe = np.linspace(-g.box / 2, g.box / 2, 257)
        pts = np.stack(np.meshgrid(*([probe] * velocity.d), indexing="ij"), -1).reshape(-1, velocity.d)
        if check_H3(velocity, pts) <= 0:
            err("init.velocity", "expansivity hypothesis violated: Spec(Du0) meets (-inf, 0]")
    except ValueError as exc:
        err("init.velocity", str(exc))
        velocity = None

    dg = cfg.diagnostics
    if not 1 <= dg.m <= 4:
        err("diagnostics.m", "Sobolev order must be an integer in [1, 4]")
    elif dg.m <= 1 + g.d / 2:
        err("diagnostics.m", f"need m > 1 + d/2 = {1 + g.d / 2:g}")
    if not dg.output_interval > 0:
        err("diagnostics.output_interval", "must be positive")
    if not 0 <= dg.fit_lo < dg.fit_hi:
        err("diagnostics.fit_lo", "fit window must satisfy 0 <= fit_lo < fit_hi")
    if dg.slack < 0:
        err("diagnostics.slack", "must be >= 0")
    if dg.buffer_action not in ("abort", "flag"):
        err("diagnostics.buffer_action", "must be 'abort' or 'flag'")
    if not 0 < dg.buffer_fraction < 0.5:
        err("diagnostics.buffer_fraction", "must lie in (0, 0.5)")

    e = cfg.experiment
    if e.kind not in EXPERIMENT_KINDS:
        err("experiment.kind", f"must be one of {EXPERIMENT_KINDS}")
    if e.cone_control not in ("outside", "inside", "identical"):
        err("experiment.cone_control", "must be 'outside', 'inside' or 'identical'")
    try:
        levels = [int(v) for v in e.cone_levels.split(",")]
        if any(n < 8 or n & (n - 1) for n in levels):
            raise ValueError
    except ValueError:
        err("experiment.cone_levels", "comma-separated powers of two expected")
    if e.samples < 1:
        err("experiment.samples", "must be >= 1")

    if not errors and gas is not None and velocity is not None and e.kind == "run":
        from .solver import domain_margin_violation

        msg = domain_margin_violation(cfg, gas, velocity)
        if msg:
            err("grid.box", msg)
    return errors
