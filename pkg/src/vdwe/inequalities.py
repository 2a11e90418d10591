"""Empirical constants of the interpolation and product inequalities.

Each check evaluates ``LHS / RHS`` on random smooth compactly supported
samples; the maximum ratio is the empirical constant. All norms are computed
on a periodic grid with spectral derivatives.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import derivative_energy
from .solver import Grid, bump


def _lp(f, p, grid):
    if np.isinf(p):
        return float(np.max(np.abs(f)))
    return (grid.integrate(np.abs(f) ** p)) ** (1.0 / p)


def _dk_l2(f, k, grid):
    return np.sqrt(grid.integrate(derivative_energy(f, k, grid)))


def _partial(f, seq, grid):
    fhat = np.fft.fftn(f)
    k = 2.0 * np.pi * np.fft.fftfreq(grid.N, d=grid.h)
    for ax in seq:
        shape = [1] * grid.d
        shape[ax] = grid.N
        fhat = fhat * (1j * k).reshape(shape)
    return np.real(np.fft.ifftn(fhat))


def _ratio(lhs, rhs):
    if rhs == 0:
        return None
    return lhs / rhs


def gagliardo_nirenberg_ratio(z, i, r, grid):
    """``||d^i z||_{2r/i} / (||z||_inf^{1-i/r} ||D^r z||_2^{i/r})`` with ``|d^i z|`` the tensor norm."""
    lhs = _lp(np.sqrt(derivative_energy(z, i, grid)), 2.0 * r / i, grid)
    rhs = _lp(z, np.inf, grid) ** (1.0 - i / r) * _dk_l2(z, r, grid) ** (i / r)
    return _ratio(lhs, rhs)


def power_ratio(f, nu, alpha, grid):
    """``||d^alpha f^nu||_2 / (||f||_inf^(nu-1) ||D^k f||_2)`` for ``f >= 0``, ``k = |alpha|``."""
    k = len(alpha)
    lhs = np.sqrt(grid.integrate(_partial(np.abs(f) ** nu, alpha, grid) ** 2))
    rhs = _lp(f, np.inf, grid) ** (nu - 1.0) * _dk_l2(f, k, grid)
    return _ratio(lhs, rhs)


def product_ratio(f, phi, alpha, grid):
    """``||d^alpha (f phi)||_2 / (||f||_inf ||D^k phi||_2 + ||phi||_inf ||D^k f||_2)``."""
    k = len(alpha)
    lhs = np.sqrt(grid.integrate(_partial(f * phi, alpha, grid) ** 2))
    rhs = _lp(f, np.inf, grid) * _dk_l2(phi, k, grid) + _lp(phi, np.inf, grid) * _dk_l2(f, k, grid)
    return _ratio(lhs, rhs)


def random_bumps(rng, grid, n_max=3, signed=True, radius=(1.0, 3.0), spread=None):
    """Sum of 1 to ``n_max`` bumps with random centres, radii and amplitudes."""
    spread = 0.25 * grid.box if spread is None else spread
    f = np.zeros(grid.shape)
    for _ in range(rng.integers(1, n_max + 1)):
        c = rng.uniform(-spread, spread, size=grid.d)
        rad = rng.uniform(*radius)
        amp = rng.uniform(0.1, 2.0) * (rng.choice([-1.0, 1.0]) if signed else 1.0)
        f += amp * bump(grid.radius(c) / rad)
    return f


@dataclass
class InequalityStat:
    name: str
    ratios: list = field(default_factory=list)
    skipped: int = 0

    def add(self, value):
        if value is None or not np.isfinite(value):
            self.skipped += 1
        else:
            self.ratios.append(float(value))

    @property
    def max_ratio(self):
        return max(self.ratios) if self.ratios else None

    def max_over(self, n):
        vals = self.ratios[:n]
        return max(vals) if vals else None


@dataclass
class InequalityReport:
    stats: dict
    samples: int
    informational: tuple = ()

    def stability(self, coarse):
        """``max over all samples / max over the first coarse samples`` for each inequality."""
        out = {}
        for name, st in self.stats.items():
            a, b = st.max_over(coarse), st.max_ratio
            out[name] = None if not a else b / a
        return out

    def gated(self):
        return {k: v for k, v in self.stats.items() if k not in self.informational}


def _alphas(d, k):
    return list(itertools.product(range(d), repeat=k))


GN_PAIRS = ((1, 2), (1, 3), (2, 3), (1, 4), (2, 4), (3, 4))
POWERS = ((2.0, (1, 2)), (3.0, (1, 2, 3)), (2.5, (1, 2)))


def _worst(values):
    vals = [v for v in values if v is not None]
    return max(vals) if vals else None


def inequality_suite(samples=100, seed=0, grid=None, gn_pairs=GN_PAIRS, powers=POWERS, m=3):
    """Ratios of the GN, power and product inequalities over random bump samples.

    GN and product ratios use signed mixtures of 1 to 3 bumps. The power
    inequality uses single non-negative bumps of random centre, radius and
    amplitude; its values on non-negative mixtures are reported as
    ``power-mix`` entries, which are informational. Samples are drawn
    sequentially from ``seed``, so a run with ``10 * samples`` extends the
    run with ``samples``.
    """
    grid = grid or Grid(1, 1024, 40.0)
    rng = np.random.default_rng(seed)
    stats = {}
    informational = []

    def stat(name):
        return stats.setdefault(name, InequalityStat(name))

    for _ in range(samples):
        z = random_bumps(rng, grid, signed=True)
        f1 = random_bumps(rng, grid, n_max=1, signed=False)
        f = random_bumps(rng, grid, signed=False)
        phi = random_bumps(rng, grid, signed=True)
        for i, r in gn_pairs:
            stat(f"GN(i={i},r={r})").add(gagliardo_nirenberg_ratio(z, i, r, grid))
        for nu, ks in powers:
            for k in ks:
                alphas = _alphas(grid.d, k)
                stat(f"power(nu={nu:g},k={k})").add(_worst(power_ratio(f1, nu, a, grid) for a in alphas))
                name = f"power-mix(nu={nu:g},k={k})"
                stat(name).add(_worst(power_ratio(f, nu, a, grid) for a in alphas))
                if name not in informational:
                    informational.append(name)
        for k in range(1, m + 1):
            stat(f"product(k={k})").add(_worst(product_ratio(f, phi, a, grid) for a in _alphas(grid.d, k)))
    return InequalityReport(stats, samples, tuple(informational))


def sup_norm_ratios(times, sup, Z, beta):
    """Ratios ``||D^j U||_inf / ((1+t)^(beta+1-j) Z)`` for ``j = 0, 1, 2``; NaN where ``Z = 0``."""
    tp = 1.0 + np.asarray(times, dtype=float)
    sup = np.asarray(sup, dtype=float).reshape(tp.size, 3)
    Z = np.asarray(Z, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.stack([sup[:, j] / (tp ** (beta + 1 - j) * Z) for j in range(3)], axis=1)
    out[Z == 0] = np.nan
    return out
