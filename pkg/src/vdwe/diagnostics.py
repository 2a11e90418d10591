"""Weighted Sobolev norms, decay exponents and the comparison function.

Norms are taken on the periodic grid: ``Y_k = ||D^k U||_{L^2}`` where ``D^k``
is the full tensor of ``k``-th derivatives, computed by discrete Fourier
differentiation and summed over every component of ``U``.
"""

import itertools
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import symsys


class AliasingWarning(UserWarning):
    """Fields are not negligible at the edge of the periodic box."""


def _frac(x):
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**9)


@dataclass(frozen=True)
class NormConfig:
    """Exponents of the weighted functional, in exact rational arithmetic.

    ``gamma0`` and ``theta`` are converted with ``Fraction.limit_denominator``
    so that 1.4 is read as 7/5.
    """

    m: int
    d: int
    gamma0: object
    formulation: str = "isentropic"
    theta: object = None

    def __post_init__(self):
        if self.formulation not in ("isentropic", "general"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.formulation == "general" and self.theta is None:
            raise ValueError("general formulation needs theta")
        if int(self.m) != self.m or self.m < 0:
            raise ValueError("m must be a non-negative integer")

    @property
    def r(self):
        d = Fraction(self.d)
        if self.formulation == "isentropic":
            g0 = _frac(self.gamma0)
            return min(1 - d / 2, (g0 / 2 - 1) * d)
        return _frac(self.theta) / 2 - d / 2

    @property
    def a(self):
        if self.formulation == "isentropic":
            return 1 + Fraction(self.d, 2) + self.r
        return 1 + _frac(self.theta) / 2

    def g(self, k):
        if self.formulation == "isentropic":
            return k - Fraction(self.d, 2) - 1
        return k + self.r - self.a

    @property
    def g_list(self):
        return [self.g(k) for k in range(self.m + 1)]

    @property
    def beta(self):
        return -self.g(1) - Fraction(self.d, 2)

    def predicted_exponent(self, k):
        """Decay bound ``Y_k <~ (1+t)^-(k+r)``."""
        return -(k + self.r)


@dataclass
class SobolevSeries:
    """Diagnostics recorded at every output time."""

    m: int
    d: int
    times: list = field(default_factory=list)
    Y: list = field(default_factory=list)
    N: list = field(default_factory=list)
    min_pi: list = field(default_factory=list)
    max_pi: list = field(default_factory=list)
    max_rho: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    momentum: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    conservation_valid: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    Z: np.ndarray = None
    zeta: np.ndarray = None

    def append(self, t, Y, N, min_pi, max_rho, mass, momentum, energy, conservation_valid=True, sup=None,
               max_pi=np.nan):
        self.times.append(float(t))
        self.Y.append(np.asarray(Y, dtype=float))
        self.N.append(np.asarray(N, dtype=float))
        self.min_pi.append(float(min_pi))
        self.max_pi.append(float(max_pi))
        self.max_rho.append(float(max_rho))
        self.mass.append(float(mass))
        self.momentum.append(np.atleast_1d(np.asarray(momentum, dtype=float)))
        self.energy.append(float(energy))
        self.conservation_valid.append(bool(conservation_valid))
        self.sup.append(np.full(3, np.nan) if sup is None else np.asarray(sup, dtype=float))

    def __len__(self):
        return len(self.times)

    @property
    def t(self):
        return np.asarray(self.times)

    def Y_array(self):
        """``(n_times, m+1)``."""
        return np.array(self.Y).reshape(len(self), self.m + 1)

    def N_array(self):
        return np.array(self.N).reshape(len(self), self.m + 1)

    def sup_array(self):
        """``(n_times, 3)``: sup norms of ``U``, ``DU`` and ``D^2 U``."""
        return np.array(self.sup).reshape(len(self), 3)

    def momentum_array(self):
        return np.array(self.momentum).reshape(len(self), self.d)


def _wavenumbers(grid):
    return 2.0 * np.pi * np.fft.fftfreq(grid.N, d=grid.h)


def _spectral_derivative(fhat, axes_seq, grid):
    k = _wavenumbers(grid)
    out = fhat
    for ax in axes_seq:
        shape = [1] * grid.d
        shape[ax] = grid.N
        out = out * (1j * k).reshape(shape)
    return out


def derivative_energy(f, k, grid):
    """Pointwise ``|D^k f|^2`` summed over all ordered multi-indices of length ``k``."""
    if k == 0:
        return f**2
    fhat = np.fft.fftn(f)
    total = np.zeros(grid.shape)
    for seq in itertools.product(range(grid.d), repeat=k):
        total += np.real(np.fft.ifftn(_spectral_derivative(fhat, seq, grid))) ** 2
    return total


def _components(fields, formulation):
    comps = [fields.pi] + [fields.w[i] for i in range(fields.w.shape[0])]
    if formulation == "general":
        comps.append(fields.s)
    return comps


def _edge_check(comps, grid):
    scale = max(float(np.max(np.abs(c))) for c in comps)
    if scale == 0:
        return
    edge = 0.0
    for c in comps:
        for ax in range(grid.d):
            edge = max(edge, float(np.max(np.abs(np.take(c, [0, -1], axis=ax)))))
    if edge > 1e-8 * scale:
        warnings.warn(
            f"fields reach the box edge ({edge:.2e} relative to {scale:.2e}); spectral norms alias",
            AliasingWarning,
            stacklevel=3,
        )


def sobolev_norms(fields, m, formulation, grid, gas=None, theta=None):
    """Return ``(Y, N)`` for ``k = 0..m``.

    ``Y_k`` is the plain ``L^2`` norm of ``D^k (pi, w[, s])``. ``N_k`` weights
    the components pointwise by ``A0 = Diag(e^{s/(g0 c_v)}, 1, .., (1+t)^-theta)``
    in the general formulation and equals ``Y_k`` otherwise.
    """
    comps = _components(fields, formulation)
    _edge_check(comps, grid)
    Y = np.zeros(m + 1)
    N = np.zeros(m + 1)
    general = formulation == "general"
    if general:
        E = symsys._entropy_weight(fields.s, gas)
        weights = [E] + [1.0] * (len(comps) - 2) + [(1.0 + fields.t) ** (-theta)]
    for k in range(m + 1):
        sq = [derivative_energy(c, k, grid) for c in comps]
        Y[k] = np.sqrt(sum(grid.integrate(q) for q in sq))
        N[k] = np.sqrt(sum(grid.integrate(wt * q) for wt, q in zip(weights, sq))) if general else Y[k]
    return Y, N


def sup_norms(fields, formulation, grid):
    """``(||U||_inf, ||DU||_inf, ||D^2 U||_inf)`` with pointwise tensor norms over all components."""
    comps = [fields.pi] + list(fields.w)
    if formulation == "general":
        comps.append(fields.s)
    out = []
    for k in range(3):
        sq = sum(derivative_energy(c, k, grid) for c in comps)
        out.append(float(np.sqrt(np.max(sq))))
    return np.array(out)


_FD8 = (4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0)


def fd8_derivative(f, axis, h):
    """Eighth-order centred first derivative (periodic)."""
    out = np.zeros_like(f)
    for j, c in enumerate(_FD8, start=1):
        out += c * (np.roll(f, -j, axis) - np.roll(f, j, axis))
    return out / h


def fd_sobolev_norms(fields, m, formulation, grid):
    """``Y_k`` with eighth-order finite differences in place of Fourier differentiation."""
    comps = _components(fields, formulation)
    Y = np.zeros(m + 1)
    for k in range(m + 1):
        total = 0.0
        for c in comps:
            for seq in itertools.product(range(grid.d), repeat=k):
                g = c
                for ax in seq:
                    g = fd8_derivative(g, ax, grid.h)
                total += grid.integrate(g**2)
        Y[k] = np.sqrt(total)
    return Y


def weighted_norms(times, Y, norm_config, C_fit):
    """``Z = sum_k (1+t)^{g_k} Y_k`` and ``zeta = (1+t)^a exp(C_fit/(1+t)) Z``."""
    tp = 1.0 + np.asarray(times, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(tp.size, -1)
    g = np.array([float(v) for v in norm_config.g_list])
    Z = np.sum(tp[:, None] ** g[None, :] * Y[:, : g.size], axis=1)
    zeta = tp ** float(norm_config.a) * np.exp(C_fit / tp) * Z
    return Z, zeta


@dataclass(frozen=True)
class DecayFit:
    k: int
    exponent: float
    intercept: float
    residual: float
    t_lo: float
    t_hi: float

    def passes(self, predicted, slack):
        return self.exponent <= predicted + slack


class DegenerateWindowError(ValueError):
    pass


def decay_fit(times, values, k=0, window=(5.0, 50.0)):
    """Least-squares slope of ``log Y`` against ``log(1+t)`` over ``window``.

    ``residual`` is the root-mean-square deviation of the fit in ``log Y``.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    lo, hi = window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < 3 or hi <= lo:
        raise DegenerateWindowError(f"window [{lo}, {hi}] holds {int(sel.sum())} samples; need 3")
    if np.any(y[sel] <= 0) or not np.all(np.isfinite(y[sel])):
        raise DegenerateWindowError("values must be positive and finite on the fit window")
    X = np.log1p(t[sel])
    L = np.log(y[sel])
    A = np.stack([X, np.ones_like(X)], axis=1)
    coef, *_ = np.linalg.lstsq(A, L, rcond=None)
    resid = L - A @ coef
    return DecayFit(k, float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2))), lo, hi)


class ComparisonFunction:
    """``f(x) = (1/nu) ln(x^nu/(1+x^nu))`` and the envelope it induces on ``zeta``.

    ``f`` maps ``(0, inf)`` increasingly onto ``(-inf, 0)``.
    """

    def __init__(self, nu, a, C):
        if not nu >= 1:
            raise ValueError("nu must be >= 1")
        if not a > 1:
            raise ValueError("a must exceed 1")
        if not C >= 0:
            raise ValueError("C must be >= 0")
        self.nu = float(nu)
        self.a = float(a)
        self.C = float(C)

    def f(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            return -np.log1p(x ** (-self.nu)) / self.nu

    def f_inverse(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y >= 0):
            raise ValueError("f_inverse is defined for y < 0 only")
        return np.expm1(-self.nu * y) ** (-1.0 / self.nu)

    @property
    def epsilon0_threshold(self):
        """``f^-1(-C/(a-1))``: the smallness bound on ``zeta(0)``."""
        if self.C == 0:
            return np.inf
        return float(self.f_inverse(-self.C / (self.a - 1.0)))

    def growth(self, t):
        return self.C * (1.0 - (1.0 + np.asarray(t, dtype=float)) ** (1.0 - self.a)) / (self.a - 1.0)

    def envelope(self, t, zeta0):
        """Upper bound on ``zeta(t)``; ``inf`` where the bound has broken down."""
        y = self.f(zeta0) + self.growth(t)
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, np.inf)
        ok = y < 0
        out[ok] = self.f_inverse(y[ok])
        return out

    def check(self, times, zeta):
        """Boolean array: ``zeta(t) <= envelope(t)`` with a 1e-12 relative allowance."""
        zeta = np.asarray(zeta, dtype=float)
        env = self.envelope(times, zeta[0])
        return zeta <= env * (1.0 + 1e-12)


def comparison_ode(nu_star, a, C_fit):
    return ComparisonFunction(nu_star, a, C_fit)


def _envelope_holds(times, Y, norm_config, nu, C):
    _, zeta = weighted_norms(times, Y, norm_config, C)
    if zeta[0] == 0:
        return bool(np.all(zeta == 0))
    return bool(np.all(ComparisonFunction(nu, float(norm_config.a), C).check(times, zeta)))


def calibrate_C(times, Y, norm_config, nu, window=1.0, C_max=1e3, rtol=1e-6):
    """Smallest ``C`` for which the envelope holds on ``t <= window``.

    Feasibility is monotone in ``C`` (larger ``C`` lowers ``zeta(t)/zeta(0)``
    and raises the envelope), so bisection applies.
    """
    t = np.asarray(times, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(t.size, -1)
    sel = t <= window + 1e-12
    ts, Ys = t[sel], Y[sel]
    if _envelope_holds(ts, Ys, norm_config, nu, 0.0):
        return 0.0
    lo, hi = 0.0, 1e-3
    while not _envelope_holds(ts, Ys, norm_config, nu, hi):
        lo, hi = hi, 2.0 * hi
        if hi > C_max:
            raise ValueError("no C below C_max makes the envelope hold on the window")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _envelope_holds(ts, Ys, norm_config, nu, mid):
            hi = mid
        else:
            lo = mid
    return hi


def nu_star(gas, m, formulation):
    """Exponent of the comparison function: ``nu``, or ``max(nu, m+1)`` in the general case."""
    return gas.nu if formulation == "isentropic" else max(gas.nu, m + 1)


@dataclass
class EnvelopeReport:
    C_fit: float
    nu: float
    threshold: float
    zeta0: float
    holds: bool
    first_violation: float = None
    margin: float = None


def envelope_check(times, Y, norm_config, nu, window=1.0, t_max=None):
    """Calibrate ``C`` on ``[0, window]`` and test the envelope on the rest of the run."""
    t = np.asarray(times, dtype=float)
    C = calibrate_C(t, Y, norm_config, nu, window)
    _, zeta = weighted_norms(t, Y, norm_config, C)
    cmp = ComparisonFunction(nu, float(norm_config.a), C)
    sel = (t >= window - 1e-12) if t_max is None else (t >= window - 1e-12) & (t <= t_max + 1e-12)
    if zeta[0] == 0:
        return EnvelopeReport(C, nu, cmp.epsilon0_threshold, 0.0, bool(np.all(zeta == 0)))
    ok = cmp.check(t, zeta)
    env = cmp.envelope(t, zeta[0])
    bad = np.where(sel & ~ok)[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        margin = float(np.min(np.where(sel, env / zeta, np.inf)))
    return EnvelopeReport(
        C_fit=C, nu=nu, threshold=cmp.epsilon0_threshold, zeta0=float(zeta[0]),
        holds=bad.size == 0, first_violation=float(t[bad[0]]) if bad.size else None, margin=margin,
    )
