"""Van der Waals gas with constant heat capacity.

Complete state law ``e(v, s) = (v - b)^{-R/c_v} exp(s/c_v)``, the coefficients
derived from it, and the change of variables between the density and the
vacuum-regular pressure variable ``pi``.

All functions accept scalars or numpy arrays and broadcast.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParametersError, OutOfDomainError, VacuumStateError

FD_REL_STEP = 1e-6


@dataclass(frozen=True)
class GasParameters:
    """Covolume ``b``, gas constant ``R`` and heat capacity ``c_v``.

    ``gamma0``, ``nu`` and ``b_tilde`` are derived on construction.
    """

    b: float
    R: float
    c_v: float
    gamma0: float = field(init=False)
    nu: float = field(init=False)
    b_tilde: float = field(init=False)

    def __post_init__(self):
        if not (np.isfinite(self.R) and self.R > 0):
            raise InvalidParametersError(f"gas constant R must be > 0, got {self.R}")
        if not (np.isfinite(self.c_v) and self.c_v > 0):
            raise InvalidParametersError(
                f"c_v must be > 0 (required for gamma0 = 1 + R/c_v > 1), got {self.c_v}"
            )
        if not (np.isfinite(self.b) and self.b >= 0):
            raise InvalidParametersError(f"covolume b must be >= 0, got {self.b}")
        g0 = 1.0 + self.R / self.c_v
        object.__setattr__(self, "gamma0", g0)
        object.__setattr__(self, "nu", (g0 + 1.0) / (g0 - 1.0))
        bt = self.b * ((g0 - 1.0) / (4.0 * g0)) ** (1.0 / (g0 - 1.0)) if self.b > 0 else 0.0
        object.__setattr__(self, "b_tilde", bt)

    @property
    def rho_max(self):
        return np.inf if self.b == 0 else 1.0 / self.b

    @property
    def pi_prefactor(self):
        """``2 sqrt(gamma0/(gamma0-1))``, the normalisation of ``pi``."""
        g0 = self.gamma0
        return 2.0 * np.sqrt(g0 / (g0 - 1.0))


def derive_constants(b, R, c_v):
    return GasParameters(b=float(b), R=float(R), c_v=float(c_v))


@dataclass(frozen=True)
class ThermoState:
    rho: object
    s: object = 0.0


@dataclass
class ThermoReport:
    p: np.ndarray
    e: np.ndarray
    T: np.ndarray
    c: np.ndarray
    gamma: np.ndarray
    Gamma: np.ndarray
    delta: np.ndarray
    G: np.ndarray
    c_p: np.ndarray
    gamma_star: np.ndarray


def _check_density(rho, gas, allow_vacuum=True):
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho < 0):
        raise OutOfDomainError("density must be finite and non-negative")
    if gas.b > 0 and np.any(rho * gas.b >= 1.0):
        raise OutOfDomainError(f"density must stay below 1/b = {1.0 / gas.b}")
    if not allow_vacuum and np.any(rho == 0):
        raise VacuumStateError(
            "quantity requires v = 1/rho, undefined at rho = 0",
            p=0.0,
            rho_c2=0.0,
        )
    return rho


def _compression(rho, gas):
    # rho / (1 - b rho) = 1/(v - b)
    return rho / (1.0 - gas.b * rho)


def pressure(rho, s, gas):
    """``p = (gamma0-1) (rho/(1-b rho))^gamma0 exp(s/c_v)``; zero at vacuum."""
    rho = _check_density(rho, gas)
    x = _compression(rho, gas)
    return (gas.gamma0 - 1.0) * x**gas.gamma0 * np.exp(s / gas.c_v)


def rho_c2(rho, s, gas):
    """``rho c^2 = gamma p``, continuous down to vacuum."""
    rho = _check_density(rho, gas)
    return gas.gamma0 / (1.0 - gas.b * rho) * pressure(rho, s, gas)


def internal_energy_density(rho, s, gas):
    """``rho e``, written without dividing by ``rho`` so that it vanishes at vacuum."""
    rho = _check_density(rho, gas)
    x = _compression(rho, gas)
    return (1.0 - gas.b * rho) * x**gas.gamma0 * np.exp(s / gas.c_v)


def sound_speed(rho, s, gas):
    rho = _check_density(rho, gas, allow_vacuum=False)
    return np.sqrt(rho_c2(rho, s, gas) / rho)


def adiabatic_coefficients(rho, s, gas):
    """Return ``(gamma, Gamma, delta, G)`` in closed form.

    With ``ratio = v/(v-b) = 1/(1-b rho)``::

        gamma = gamma0 ratio, Gamma = delta = (gamma0-1) ratio, G = (gamma0+1)/2 ratio
    """
    rho = _check_density(rho, gas, allow_vacuum=False)
    ratio = 1.0 / (1.0 - gas.b * rho) + 0.0 * np.asarray(s)
    g0 = gas.gamma0
    return g0 * ratio, (g0 - 1.0) * ratio, (g0 - 1.0) * ratio, 0.5 * (g0 + 1.0) * ratio


def eos_eval(state, gas):
    """Full thermodynamic report at ``state``.

    Raises :class:`VacuumStateError` when ``rho == 0`` anywhere, since ``e``,
    ``T`` and ``c`` need ``v = 1/rho``.
    """
    rho, s = state.rho, state.s
    rho = _check_density(rho, gas)
    if np.any(rho == 0):
        raise VacuumStateError(
            "eos_eval needs rho > 0; p and rho c^2 extend by 0 at vacuum",
            p=pressure(rho, s, gas),
            rho_c2=rho_c2(rho, s, gas),
        )
    x = _compression(rho, gas)
    es = np.exp(s / gas.c_v)
    p = (gas.gamma0 - 1.0) * x**gas.gamma0 * es
    e = x ** (gas.gamma0 - 1.0) * es
    T = e / gas.c_v
    gamma, Gamma, delta, G = adiabatic_coefficients(rho, s, gas)
    c = np.sqrt(gamma * p / rho)
    denom = gamma * delta - Gamma**2
    pvT = p / (rho * T)
    c_p = pvT * gamma / denom
    return ThermoReport(
        p=p, e=e, T=T, c=c, gamma=gamma, Gamma=Gamma, delta=delta, G=G,
        c_p=c_p, gamma_star=gamma * delta / denom,
    )


def _central_diff(fun, x0, rel_step=FD_REL_STEP):
    h = rel_step * np.maximum(np.abs(x0), 1e-300)
    return (fun(x0 + h) - fun(x0 - h)) / (2.0 * h)


def thermo_identity_suite(state, gas):
    """Relative residuals of the thermodynamic identities at ``state``.

    Closed-form identities hold to rounding. The entries marked ``fd_`` use
    central differences with relative step 1e-6 and hold to ~1e-6.
    """
    rho = _check_density(state.rho, gas, allow_vacuum=False)
    s = np.asarray(state.s, dtype=float)
    rep = eos_eval(ThermoState(rho, s), gas)
    v = 1.0 / rho
    pvT = rep.p * v / rep.T

    def rel(a, b):
        return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)

    # c^2 = dp/drho at fixed s
    dp = _central_diff(lambda r: pressure(r, s, gas), rho)
    # G = (1/c) d(rho c)/drho at fixed s
    drc = _central_diff(lambda r: np.sqrt(rho_c2(r, s, gas) * r), rho)
    # Along an isobar e = c_v T and v = b + R T/p, so T ds/dT|_p = c_v + R.
    c_p_isobar = gas.c_v + gas.R

    return {
        "delta_cv": rel(rep.delta * gas.c_v, pvT),
        "c_p": rel(rep.c_p, c_p_isobar),
        "gamma_star": rel(rep.gamma_star, c_p_isobar / gas.c_v),
        "fd_sound_speed": rel(rep.c**2, dp),
        "fd_G": rel(rep.G, drc / rep.c),
        "convexity": np.minimum.reduce([
            np.asarray(rep.gamma * rep.delta - rep.Gamma**2),
            np.asarray(rep.delta), np.asarray(rep.gamma),
        ]),
        "Gamma": rep.Gamma,
        "G": rep.G,
    }


def pi_from_state(rho, s, gas):
    """``pi = 2 sqrt(g0/(g0-1)) (rho/(1-b rho))^((g0-1)/2) exp((g0-1) s / (2 g0 c_v))``."""
    rho = _check_density(rho, gas)
    g0 = gas.gamma0
    x = _compression(rho, gas)
    return gas.pi_prefactor * x ** (0.5 * (g0 - 1.0)) * np.exp((g0 - 1.0) * s / (2.0 * g0 * gas.c_v))


def covolume_factor(pi, s, gas):
    """``1/(1 - b rho) = 1 + b_tilde exp(-s/(g0 c_v)) pi^(nu-1)``, evaluated from ``pi`` only."""
    pi = np.asarray(pi, dtype=float)
    return 1.0 + gas.b_tilde * np.exp(-s / (gas.gamma0 * gas.c_v)) * _pow0(pi, gas.nu - 1.0)


def rho_from_pi(pi, s, gas):
    """Inverse of :func:`pi_from_state`; always lands in ``[0, 1/b)``."""
    pi = np.asarray(pi, dtype=float)
    if np.any(pi < 0) or np.any(~np.isfinite(pi)):
        raise OutOfDomainError("pi must be finite and non-negative")
    g0 = gas.gamma0
    if gas.b > 0:
        q = gas.b_tilde * np.exp(-s / (g0 * gas.c_v)) * _pow0(pi, gas.nu - 1.0)
        # (1/b)(1 - 1/(1+q)) rearranged to avoid cancellation for small q
        return q / (gas.b * (1.0 + q))
    return _pow0(pi / gas.pi_prefactor, gas.nu - 1.0) * np.exp(-s / (g0 * gas.c_v))


def _pow0(x, a):
    """``x**a`` for ``x >= 0`` with the continuous value 0 at ``x = 0`` (``a > 0``)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0, np.power(np.where(x > 0, x, 1.0), a), 0.0)
    return out
