"""Method-of-lines solver for the perturbation of the background flow.

The state is ``(pi, w, s)`` with ``w = u - ubar``; the background ``ubar`` is
evaluated exactly at every Runge-Kutta stage rather than evolved. Spatial
derivatives are fourth-order centred differences on a periodic box, and a
fourth-order hyperviscosity ``-mu h^4 Lap^2`` damps grid-scale modes.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, symsys, thermo
from .background import BackgroundFlow, InitialVelocity
from .errors import (
    BlowUpError,
    BufferContactError,
    DomainTooSmallError,
    InvalidParametersError,
    PositivityViolation,
)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-box/2, box/2)^d`` with ``N`` cells per axis."""

    d: int
    N: int
    box: float
    T_end: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidParametersError("grid dimension must be 1 or 2")
        if self.N < 8 or self.N & (self.N - 1):
            raise InvalidParametersError(f"N must be a power of two >= 8, got {self.N}")
        if not self.box > 0:
            raise InvalidParametersError("box length must be positive")

    @property
    def h(self):
        return self.box / self.N

    @property
    def shape(self):
        return (self.N,) * self.d

    @property
    def cell_volume(self):
        return self.h**self.d

    def axis(self):
        return -0.5 * self.box + self.h * np.arange(self.N)

    def coords(self):
        """Coordinates with the component on the leading axis, ``(d, N, ...)``."""
        return np.stack(np.meshgrid(*([self.axis()] * self.d), indexing="ij"))

    def points(self):
        """Coordinates with the component on the trailing axis, ``(N, ..., d)``."""
        return np.moveaxis(self.coords(), 0, -1)

    def radius(self, center=None):
        x = self.coords()
        if center is not None:
            x = x - np.reshape(np.asarray(center, dtype=float), (self.d,) + (1,) * self.d)
        return np.sqrt(np.sum(x**2, axis=0))

    def buffer_mask(self, fraction):
        """Cells within ``fraction * box`` of the periodic boundary."""
        edge = 0.5 * self.box * (1.0 - 2.0 * fraction)
        return np.any(np.abs(self.coords()) >= edge, axis=0)

    def sponge_profile(self, fraction):
        """Smooth ramp from 0 at the inner edge of the buffer to 1 at the box edge."""
        depth = fraction * self.box
        edge = 0.5 * self.box - depth
        xi = np.clip((np.max(np.abs(self.coords()), axis=0) - edge) / depth, 0.0, 1.0)
        return np.sin(0.5 * np.pi * xi) ** 2

    def integrate(self, f):
        """Grid quadrature over the box (trapezoidal rule for periodic data)."""
        return float(np.sum(f)) * self.cell_volume


@dataclass
class FieldSet:
    """Discrete state: ``pi``, velocity perturbation ``w = u - ubar`` (``(d, ...)``), ``s``."""

    pi: np.ndarray
    w: np.ndarray
    s: np.ndarray
    t: float = 0.0

    def copy(self):
        return FieldSet(self.pi.copy(), self.w.copy(), self.s.copy(), self.t)

    def velocity(self, flow, grid):
        """Full velocity ``u = w + ubar(t)`` on the grid."""
        return self.w + background_on_grid(flow, grid, self.t)[0]

    def finite(self):
        return bool(np.isfinite(self.pi).all() and np.isfinite(self.w).all() and np.isfinite(self.s).all())


@dataclass(frozen=True)
class SchemeConfig:
    order: int = 4
    cfl: float = 0.4
    mu: float = 0.02
    positivity_tolerance: float = 1e-6
    formulation: str = "isentropic"
    theta: float = None
    sponge: float = 0.0
    sponge_fraction: float = 0.05

    def __post_init__(self):
        if self.sponge < 0:
            raise InvalidParametersError("sponge rate must be >= 0")
        if self.order != 4:
            raise InvalidParametersError("only the fourth-order scheme is implemented")
        if not 0 < self.cfl <= 1:
            raise InvalidParametersError("CFL number must lie in (0, 1]")
        if self.mu < 0:
            raise InvalidParametersError("hyperviscosity must be >= 0")
        if self.formulation not in ("isentropic", "general"):
            raise InvalidParametersError(f"unknown formulation {self.formulation!r}")


def bump(r):
    """``exp(1 - 1/(1 - r^2))`` on ``r < 1``, zero elsewhere; ``C^inf`` with maximum 1."""
    r = np.asarray(r, dtype=float)
    inside = r < 1.0
    out = np.zeros_like(r)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def background_on_grid(flow, grid, t):
    """``(ubar, dubar)`` with components on the leading axes, ``(d, ...)`` and ``(d, d, ...)``."""
    sample = flow.evaluate(t, grid.points())
    ubar = np.moveaxis(sample.ubar, -1, 0)
    dubar = np.moveaxis(sample.dubar, (-2, -1), (0, 1))
    return ubar, dubar


def _initial_speed(gas, velocity, eps, eps_s, R, d):
    # Bound on |u0| + c over the closed support ball of the data.
    r = np.linspace(0.0, R, 401)
    if d == 1:
        pts = np.concatenate([-r[::-1], r])[:, None]
        prof = bump(np.abs(pts[:, 0]) / R)
    else:
        ang = np.linspace(0.0, 2 * np.pi, 129)
        rr, aa = np.meshgrid(r, ang, indexing="ij")
        pts = np.stack([rr * np.cos(aa), rr * np.sin(aa)], -1).reshape(-1, 2)
        prof = bump(rr.ravel() / R)
    unorm = np.linalg.norm(velocity(pts), axis=-1)
    s = eps_s * prof
    return float(np.max(symsys.local_speed(eps * prof, unorm, s, gas, "general")))


def domain_margin_violation(cfg, gas, velocity):
    """Message when the data support plus ``M T_end`` reaches the buffer, else ``None``."""
    g, i = cfg.grid, cfg.init
    M = _initial_speed(gas, velocity, i.eps, i.eps_s, i.R_support, g.d)
    room = 0.5 * g.box * (1.0 - 2.0 * cfg.diagnostics.buffer_fraction) - i.R_support
    if room < M * g.T_end:
        need = 2.0 * (i.R_support + M * g.T_end) / (1.0 - 2.0 * cfg.diagnostics.buffer_fraction)
        return (
            f"finite-speed margin {room:.4g} is below M*T_end = {M * g.T_end:.4g}; "
            f"box must be at least {need:.4g}"
        )
    return None


def init_data(init, grid, gas, velocity=None, buffer_fraction=0.05, center=None):
    """Bump initial data ``pi0 = eps psi_R``, ``s0 = eps_s psi_R``, ``w0 = 0``.

    ``init`` is an :class:`vdwe.config.InitSection`. Raises
    :class:`DomainTooSmallError` when the support plus the finite-speed
    margin ``M T_end`` does not fit inside the buffer.
    """
    if init.eps < 0:
        raise InvalidParametersError("bump amplitude must be >= 0")
    R = init.R_support
    if not R > 0:
        raise InvalidParametersError("support radius must be positive")
    if velocity is None:
        velocity = InitialVelocity(init.velocity, grid.d, **init.velocity_params())
    M = _initial_speed(gas, velocity, init.eps, init.eps_s, R, grid.d)
    offset = 0.0 if center is None else float(np.max(np.abs(center)))
    room = 0.5 * grid.box * (1.0 - 2.0 * buffer_fraction) - R - offset
    if room < M * grid.T_end:
        raise DomainTooSmallError(
            f"finite-speed margin {room:.4g} is below M*T_end = {M * grid.T_end:.4g}"
        )
    prof = bump(grid.radius(center) / R)
    return FieldSet(
        pi=init.eps * prof,
        w=np.zeros((grid.d,) + grid.shape),
        s=init.eps_s * prof,
        t=0.0,
    )


def _ddx(f, axis, h):
    """Fourth-order centred first derivative along ``axis`` (periodic)."""
    return (
        8.0 * (np.roll(f, -1, axis) - np.roll(f, 1, axis))
        - (np.roll(f, -2, axis) - np.roll(f, 2, axis))
    ) / (12.0 * h)


def _lap_h2(f, axes):
    """``h^2`` times the three-point Laplacian over ``axes``."""
    return sum(np.roll(f, -1, a) - 2.0 * f + np.roll(f, 1, a) for a in axes)


def hyperviscosity(f, d, mu):
    """``-mu h^4 Lap^2 f`` with the discrete Laplacian applied twice; scale-free in ``h``."""
    axes = tuple(range(f.ndim - d, f.ndim))
    return -mu * _lap_h2(_lap_h2(f, axes), axes)


def cfl_dt(fields, scheme, gas, grid, flow=None):
    """``CFL h / (M d)`` with ``M`` the maximal speed over every cell, ``ubar`` included.

    Returns ``inf`` when nothing moves; callers cap it by the output interval.
    """
    if not fields.finite():
        raise BlowUpError("non-finite field values", t=fields.t)
    u = fields.w if flow is None else fields.velocity(flow, grid)
    s = fields.s if scheme.formulation == "general" else None
    M = symsys.max_propagation_speed(fields.pi, u, s, gas, scheme.formulation)
    if M == 0:
        return np.inf
    return scheme.cfl * grid.h / (M * grid.d)


class Stepper:
    """Right-hand side and RK4 step for one grid, gas, scheme and background.

    ``forcing(t)`` may return ``(f_pi, f_w, f_s)`` added to the right-hand
    side; it is used for manufactured solutions.
    """

    def __init__(self, grid, gas, scheme, flow, forcing=None):
        self.grid = grid
        self.gas = gas
        self.scheme = scheme
        self.flow = flow
        self.forcing = forcing
        self._cache = {}
        # absorbing layer in the dead buffer; the periodic seam is where ubar jumps
        self._sponge = scheme.sponge * grid.sponge_profile(scheme.sponge_fraction) if scheme.sponge > 0 else None

    def background(self, t):
        if t not in self._cache:
            if len(self._cache) >= 4:
                self._cache.pop(next(iter(self._cache)))
            self._cache[t] = background_on_grid(self.flow, self.grid, t)
        return self._cache[t]

    def rhs(self, pi, w, s, t):
        grid, gas = self.grid, self.gas
        d, h = grid.d, grid.h
        general = self.scheme.formulation == "general"
        ubar, dubar = self.background(t)
        u = w + ubar
        axes = range(1, d + 1)
        grad_pi = [_ddx(pi, a - 1, h) for a in axes]
        grad_w = [[_ddx(w[i], a - 1, h) for a in axes] for i in range(d)]
        div_u = sum(grad_w[j][j] + dubar[j, j] for j in range(d))
        s_eff = s if general else 0.0
        # kappa = (g0-1)/2 pi/(1-b rho); the velocity row carries E kappa
        kappa = symsys.pressure_coupling(pi, s_eff, gas)
        E = symsys._entropy_weight(s, gas) if general else 1.0
        dpi = -sum(u[j] * grad_pi[j] for j in range(d)) - kappa * div_u
        dw = np.empty_like(w)
        for i in range(d):
            dw[i] = (
                -sum(u[j] * grad_w[i][j] for j in range(d))
                - sum(w[j] * dubar[i, j] for j in range(d))
                - E * kappa * grad_pi[i]
            )
        mu = self.scheme.mu
        if mu > 0:
            dpi += hyperviscosity(pi, d, mu)
            dw += hyperviscosity(w, d, mu)
        if general:
            ds = -sum(u[j] * _ddx(s, j, h) for j in range(d))
            if mu > 0:
                ds += hyperviscosity(s, d, mu)
        else:
            ds = np.zeros_like(s)
        if self._sponge is not None:
            dpi = dpi - self._sponge * pi
            dw = dw - self._sponge * w
            if general:
                ds = ds - self._sponge * s
        if self.forcing is not None:
            f_pi, f_w, f_s = self.forcing(t)
            dpi = dpi + f_pi
            dw = dw + f_w
            ds = ds + f_s
        return dpi, dw, ds

    def step(self, fields, dt):
        """One classical four-stage Runge-Kutta step."""
        t = fields.t
        y = (fields.pi, fields.w, fields.s)

        def shifted(k, c):
            return tuple(a + c * b for a, b in zip(y, k))

        k1 = self.rhs(*y, t)
        k2 = self.rhs(*shifted(k1, 0.5 * dt), t + 0.5 * dt)
        k3 = self.rhs(*shifted(k2, 0.5 * dt), t + 0.5 * dt)
        k4 = self.rhs(*shifted(k3, dt), t + dt)
        new = tuple(
            a + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
        )
        out = FieldSet(*new, t=t + dt)
        if not out.finite():
            raise BlowUpError(f"non-finite values after step to t={out.t:.6g}", t=out.t)
        return out

    def dt(self, fields):
        return cfl_dt(fields, self.scheme, self.gas, self.grid, self.flow)


def step(fields, dt, scheme, gas, flow, grid, forcing=None):
    """Functional form of :meth:`Stepper.step`."""
    return Stepper(grid, gas, scheme, flow, forcing).step(fields, dt)


def conservation_monitor(fields, gas, grid, flow, buffer_fraction=0.05, threshold=1e-12):
    """Grid integrals of mass, momentum (per component) and total energy.

    Returns ``(mass, momentum, energy, valid)``; ``valid`` is False when the
    disturbance has reached the buffer, which invalidates the no-flux argument.
    """
    pi = np.maximum(fields.pi, 0.0)
    s = fields.s
    rho = thermo.rho_from_pi(pi, s, gas)
    u = fields.velocity(flow, grid)
    mass = grid.integrate(rho)
    momentum = np.array([grid.integrate(rho * u[i]) for i in range(grid.d)])
    energy = grid.integrate(0.5 * rho * np.sum(u**2, axis=0) + thermo.internal_energy_density(rho, s, gas))
    buf = grid.buffer_mask(buffer_fraction)
    reach = max(np.max(np.abs(fields.pi[buf])), np.max(np.abs(fields.w[:, buf])), np.max(np.abs(s[buf])))
    return mass, momentum, energy, bool(reach <= threshold)


@dataclass
class RunResult:
    """Everything produced by :func:`run`: the series, events and final state."""

    config: object
    grid: Grid
    gas: object
    flow: BackgroundFlow
    series: diagnostics.SobolevSeries
    final: FieldSet
    initial: FieldSet
    snapshots: list = field(default_factory=list)
    events: list = field(default_factory=list)
    steps: int = 0
    wall_time: float = 0.0
    completed: bool = False
    buffer_contact: float = None


def _output_times(T_end, interval):
    n = int(np.floor(T_end / interval + 1e-9))
    times = [k * interval for k in range(n + 1)]
    if T_end - times[-1] > 1e-9 * T_end:
        times.append(T_end)
    return times


def run(config, initial=None, forcing=None, callback=None):
    """Evolve ``config`` to ``T_end`` and record diagnostics at every output time.

    Aborts with :class:`PositivityViolation`, :class:`BufferContactError` or
    :class:`BlowUpError`; the partial :class:`RunResult` is attached to the
    exception as ``.result``.
    """
    gas = config.gas_parameters()
    g = config.grid
    grid = Grid(g.d, g.N, g.box, g.T_end)
    theta = config.theta() if config.scheme.formulation == "general" else None
    if theta is not None:
        symsys.check_theta(theta, gas)
    sc = config.scheme
    scheme = SchemeConfig(
        sc.order, sc.cfl, sc.mu, sc.positivity_tolerance, sc.formulation, theta,
        sc.sponge, config.diagnostics.buffer_fraction,
    )
    velocity = InitialVelocity(config.init.velocity, g.d, **config.init.velocity_params())
    flow = BackgroundFlow(velocity)
    dg = config.diagnostics
    fields = initial.copy() if initial is not None else init_data(
        config.init, grid, gas, velocity, dg.buffer_fraction
    )
    stepper = Stepper(grid, gas, scheme, flow, forcing)
    series = diagnostics.SobolevSeries(m=dg.m, d=g.d)
    pi_scale = float(np.max(np.abs(fields.pi)))
    buffer = grid.buffer_mask(dg.buffer_fraction)
    result = RunResult(config, grid, gas, flow, series, fields, fields.copy())
    snap_every = dg.snapshot_interval
    next_snap = 0.0
    start = time.perf_counter()

    def record(f):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", diagnostics.AliasingWarning)
            Y, Nk = diagnostics.sobolev_norms(f, dg.m, scheme.formulation, grid, gas, theta)
        if caught and not any(kind == "Aliasing" for _, kind, _ in result.events):
            # reported once per run; later outputs alias at least as much
            msg = str(caught[0].message)
            result.events.append((f.t, "Aliasing", msg))
            warnings.warn(f"t={f.t:.6g}: {msg}", diagnostics.AliasingWarning, stacklevel=2)
        rho = thermo.rho_from_pi(np.maximum(f.pi, 0.0), f.s, gas)
        mass, mom, energy, valid = conservation_monitor(f, gas, grid, flow, dg.buffer_fraction, dg.buffer_threshold)
        series.append(
            t=f.t, Y=Y, N=Nk, min_pi=float(np.min(f.pi)), max_pi=float(np.max(f.pi)), max_rho=float(np.max(rho)),
            mass=mass, momentum=mom, energy=energy, conservation_valid=valid,
            sup=diagnostics.sup_norms(f, scheme.formulation, grid),
        )

    def fail(exc):
        result.final = fields
        result.wall_time = time.perf_counter() - start
        result.events.append((exc.t, type(exc).__name__, str(exc)))
        exc.result = result
        return exc

    for t_out in _output_times(g.T_end, dg.output_interval):
        try:
            while fields.t < t_out - 1e-12 * max(1.0, t_out):
                dt = min(stepper.dt(fields), t_out - fields.t)
                fields = stepper.step(fields, dt)
                result.steps += 1
        except BlowUpError as exc:
            raise fail(exc) from None
        fields.t = t_out
        record(fields)
        if callback is not None:
            callback(fields)
        if snap_every > 0 and t_out >= next_snap - 1e-12:
            result.snapshots.append(fields.copy())
            next_snap += snap_every
        floor = -sc.positivity_tolerance * pi_scale
        if series.min_pi[-1] < floor:
            raise fail(PositivityViolation(
                f"min pi = {series.min_pi[-1]:.3e} below {floor:.3e} at t={t_out:.6g}", t=t_out))
        if gas.b > 0 and series.max_rho[-1] >= 1.0 / gas.b:
            raise fail(PositivityViolation(f"density reached 1/b at t={t_out:.6g}", t=t_out))
        reach = max(np.max(np.abs(fields.pi[buffer])), np.max(np.abs(fields.w[:, buffer])))
        if reach > dg.buffer_threshold:
            msg = f"disturbance {reach:.3e} inside the boundary buffer at t={t_out:.6g}"
            if dg.buffer_action == "abort":
                raise fail(BufferContactError(msg, t=t_out))
            if result.buffer_contact is None:
                result.buffer_contact = t_out
                result.events.append((t_out, "BufferContact", msg))
    result.final = fields
    result.completed = True
    result.wall_time = time.perf_counter() - start
    return result


@dataclass
class ConeReport:
    """Cone discrepancies per refinement level and the observed convergence order."""

    control: str
    levels: list
    h: list
    discrepancy: list
    M: float
    T1: float
    orders: list
    floor: float

    @property
    def observed_order(self):
        """Smallest pairwise order among levels resolved above the rounding floor."""
        vals = [o for o in self.orders if o is not None]
        return min(vals) if vals else None


def perturbation_bump(grid, center, radius, amplitude):
    """Bump perturbation of ``pi`` (and nothing else) centred at ``center``."""
    prof = bump(grid.radius(center) / radius)
    return amplitude * prof, np.zeros((grid.d,) + grid.shape), np.zeros(grid.shape)


def cone_geometry(config, x0, R, control):
    """Perturbation placement and the cone slope ``M`` for :func:`cone_agreement_test`.

    ``outside``: a bump touching the ball ``B(x0, R)`` from outside, on the side
    facing the origin. ``inside``: a bump centred at ``x0`` with radius ``R/2``.
    """
    d = config.grid.d
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (d,)).copy()
    i = config.init
    if control == "outside":
        r2 = 0.5 * R
        direction = -x0 / np.linalg.norm(x0) if np.linalg.norm(x0) > 0 else np.eye(d)[0]
        center = x0 + (R + r2) * direction
    elif control == "inside":
        r2 = 0.5 * R
        center = x0
    elif control == "identical":
        r2, center = 0.5 * R, x0
    else:
        raise ValueError(f"unknown control {control!r}")
    amp = 0.0 if control == "identical" else i.eps
    gas = config.gas_parameters()
    velocity = InitialVelocity(i.velocity, d, **i.velocity_params())
    # speeds over the ball for both data sets, sampled finely
    n = 801
    s1 = np.linspace(-1.0, 1.0, n)
    if d == 1:
        pts = (x0 + R * s1[:, None])
    else:
        a, b = np.meshgrid(s1, s1, indexing="ij")
        keep = a**2 + b**2 <= 1.0
        pts = x0 + R * np.stack([a[keep], b[keep]], -1)
    base = i.eps * bump(np.linalg.norm(pts, axis=-1) / i.R_support)
    pert = amp * bump(np.linalg.norm(pts - center, axis=-1) / r2)
    unorm = np.linalg.norm(velocity(pts), axis=-1)
    M = max(
        float(np.max(symsys.local_speed(base, unorm, 0.0, gas, config.scheme.formulation))),
        float(np.max(symsys.local_speed(base + pert, unorm, 0.0, gas, config.scheme.formulation))),
    )
    return center, r2, amp, M


def cone_agreement_test(config, x0, R, control="outside", levels=(256, 512, 1024), samples=40):
    """Sup of ``|U - U~|`` over the shrinking cone ``|x - x0| <= R - M t``.

    Runs the base data of ``config`` and the same data plus a perturbation
    (see :func:`cone_geometry`) on each grid in ``levels``, comparing at
    ``samples`` equally spaced times in ``[0, R/M)``.
    """
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (config.grid.d,))
    center, r2, amp, M = cone_geometry(config, x0, R, control)
    T1 = R / M
    dt_out = T1 / samples
    disc, hs = [], []
    for N in levels:
        cfg = config.replace(
            grid__N=N, grid__T_end=(samples - 1) * dt_out,
            diagnostics__output_interval=dt_out, diagnostics__buffer_action="flag",
            scheme__positivity_tolerance=np.inf,
        )
        g = cfg.grid
        grid = Grid(g.d, N, g.box, g.T_end)
        gas = cfg.gas_parameters()
        base = init_data(cfg.init, grid, gas, buffer_fraction=cfg.diagnostics.buffer_fraction)
        dpi, dw, ds = perturbation_bump(grid, center, r2, amp)
        other = FieldSet(base.pi + dpi, base.w + dw, base.s + ds, 0.0)
        stored = []
        run(cfg, initial=base, callback=lambda f: stored.append(f.copy()))
        worst = [0.0]
        it = iter(stored)

        def compare(f):
            ref = next(it)
            inside = grid.radius(x0) <= R - M * f.t
            if not np.any(inside):
                return
            diff = max(
                np.max(np.abs(f.pi - ref.pi)[inside]),
                np.max(np.abs(f.w - ref.w)[:, inside]),
                np.max(np.abs(f.s - ref.s)[inside]),
            )
            worst[0] = max(worst[0], float(diff))

        run(cfg, initial=other, callback=compare)
        disc.append(worst[0])
        hs.append(grid.h)
    floor = 1e3 * np.finfo(float).eps * max(config.init.eps, 1e-300)
    orders = []
    for a, b, ha, hb in zip(disc[:-1], disc[1:], hs[:-1], hs[1:]):
        if a > floor and b > floor:
            orders.append(float(np.log(a / b) / np.log(ha / hb)))
        elif a > floor:
            # the finer level dropped to the rounding floor: at least this fast
            orders.append(float(np.log(a / floor) / np.log(ha / hb)))
        else:
            orders.append(None)
    return ConeReport(control, list(levels), hs, disc, M, T1, orders, floor)
