"""Flux structure of the Euler system in the variables ``(pi, u, s)``.

Every coefficient is assembled from ``pi`` through the covolume identity
``1/(1 - b rho) = 1 + b_tilde exp(-s/(g0 c_v)) pi^(nu-1)``, so nothing here
divides by the density and all matrices stay regular at vacuum.
"""

import numpy as np

from . import thermo
from .errors import InvalidParametersError, OutOfDomainError, VacuumStateError
from .thermo import _pow0


def _entropy_weight(s, gas):
    """``exp(s/(g0 c_v))``."""
    return np.exp(np.asarray(s, dtype=float) / (gas.gamma0 * gas.c_v))


def pressure_coupling(pi, s, gas):
    """``(g0-1)/2 * pi/(1 - b rho)`` as a polynomial-like function of ``pi``."""
    pi = np.asarray(pi, dtype=float)
    return 0.5 * (gas.gamma0 - 1.0) * pi * thermo.covolume_factor(pi, s, gas)


def _check_pi(pi):
    pi = np.asarray(pi, dtype=float)
    if np.any(pi < 0) or np.any(~np.isfinite(pi)):
        raise OutOfDomainError("pi must be finite and non-negative")
    return pi


def assemble_symbol(xi, pi, u, s, gas):
    """Return ``(A, S)`` for direction ``xi`` at a single state.

    ``A`` is the ``(d+2)x(d+2)`` symbol acting on ``(pi, u, s)``; ``S`` is the
    diagonal symmetrizer ``Diag(1, exp(-s/(g0 c_v)) 1_d, 1)``.
    """
    xi = np.asarray(xi, dtype=float)
    u = np.asarray(u, dtype=float)
    d = xi.size
    if u.size != d:
        raise ValueError("xi and u must have the same length")
    if not np.linalg.norm(xi) > 0:
        raise ValueError("direction xi must be non-zero")
    pi = float(_check_pi(pi))
    E = float(_entropy_weight(s, gas))
    kappa = float(pressure_coupling(pi, s, gas))
    un = float(u @ xi)
    A = un * np.eye(d + 2)
    A[0, 1:d + 1] = kappa * xi
    A[1:d + 1, 0] = kappa * E * xi
    S = np.diag(np.r_[1.0, np.full(d, 1.0 / E), 1.0])
    return A, S


def classical_symmetrizer(xi, rho, u, s, gas):
    """Symbol ``A~`` in ``(p, u, s)`` variables and its symmetrizer ``D``.

    Only valid away from vacuum: ``rho <= 0`` raises :class:`VacuumStateError`.
    """
    rho = float(rho)
    if rho <= 0:
        raise VacuumStateError("classical symmetrization requires rho > 0")
    xi = np.asarray(xi, dtype=float)
    u = np.asarray(u, dtype=float)
    d = xi.size
    rc2 = float(thermo.rho_c2(rho, s, gas))
    un = float(u @ xi)
    A = un * np.eye(d + 2)
    A[0, 1:d + 1] = rc2 * xi
    A[1:d + 1, 0] = xi / rho
    D = np.diag(np.r_[1.0 / rc2, np.full(d, rho), 1.0])
    return A, D


def symmetrized_eigenvalues(A, S):
    """Eigenvalues of ``A`` computed from the symmetric ``S^(1/2) A S^(-1/2)``."""
    sq = np.sqrt(np.diag(S))
    M = (sq[:, None] * A) / sq[None, :]
    return np.linalg.eigvalsh(0.5 * (M + M.T))


def assemble_isentropic_split(pi, w, dubar, div_w, grad_pi, gas):
    """Perturbation split of the isentropic system at one point.

    Parameters
    ----------
    pi : float
    w : (d,) array
        Velocity perturbation ``u - ubar``.
    dubar : (d, d) array
        Background Jacobian, ``dubar[i, j] = d ubar_i / d x_j``.
    div_w : float
    grad_pi : (d,) array

    Returns
    -------
    A_list : list of (d+1, d+1) arrays
    B : (d+1,) array
    F : (d+1,) array
        The Van der Waals correction ``(g0-1)/2 b_tilde pi^nu (div(w+ubar), grad pi)``.
    """
    pi = float(_check_pi(pi))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    dubar = np.atleast_2d(np.asarray(dubar, dtype=float))
    grad_pi = np.atleast_1d(np.asarray(grad_pi, dtype=float))
    d = w.size
    half = 0.5 * (gas.gamma0 - 1.0)
    A_list = []
    for j in range(d):
        Aj = w[j] * np.eye(d + 1)
        Aj[0, j + 1] = Aj[j + 1, 0] = half * pi
        A_list.append(Aj)
    B = np.r_[half * pi * np.trace(dubar), dubar @ w]
    amp = half * gas.b_tilde * float(_pow0(pi, gas.nu))
    F = amp * np.r_[div_w + np.trace(dubar), grad_pi]
    return A_list, B, F


def check_theta(theta, gas):
    upper = min(1.0, 0.5 * (gas.gamma0 - 1.0))
    # gamma0 is formed in floating point, so allow the bound itself up to rounding
    if not (0.0 < theta <= upper * (1.0 + 1e-12)):
        raise InvalidParametersError(
            f"theta must lie in (0, min(1, (gamma0-1)/2)] = (0, {upper}], got {theta}"
        )


def assemble_general_split(pi, w, s, t, theta, ubar, dubar, div_w, grad_pi, gas):
    """Weighted split of the full (non-isentropic) perturbation system at one point.

    Returns ``(A0, A_list, C_list, B, F_star)``; ``A0 = Diag(e^{s/(g0 c_v)}, 1.., (1+t)^-theta)``
    and ``C_j = ubar_j A0``.
    """
    check_theta(theta, gas)
    pi = float(_check_pi(pi))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    ubar = np.atleast_1d(np.asarray(ubar, dtype=float))
    dubar = np.atleast_2d(np.asarray(dubar, dtype=float))
    grad_pi = np.atleast_1d(np.asarray(grad_pi, dtype=float))
    d = w.size
    half = 0.5 * (gas.gamma0 - 1.0)
    E = float(_entropy_weight(s, gas))
    tw = (1.0 + t) ** (-theta)
    A0 = np.diag(np.r_[E, np.ones(d), tw])
    A_list = []
    for j in range(d):
        Aj = np.diag(np.r_[E * w[j], np.full(d, w[j]), tw * w[j]])
        Aj[0, j + 1] = Aj[j + 1, 0] = half * E * pi
        A_list.append(Aj)
    C_list = [ubar[j] * A0 for j in range(d)]
    B = np.r_[half * E * pi * np.trace(dubar), dubar @ w, 0.0]
    amp = half * gas.b_tilde * float(_pow0(pi, gas.nu))
    F_star = amp * np.r_[div_w + np.trace(dubar), grad_pi, 0.0]
    return A0, A_list, C_list, B, F_star


def local_speed(pi, u_norm, s, gas, formulation="isentropic"):
    """Pointwise bound on the characteristic speeds.

    ``isentropic``: ``(g0-1)/2 |pi| (1 + b_tilde |pi|^(nu-1)) + |u|``.
    ``general``: ``|u| + e^{s/(2 g0 c_v)} (g0-1)/2 |pi| (1 + b_tilde e^{-s/(g0 c_v)} |pi|^(nu-1))``,
    the exact ``|u| + c``; it never exceeds the weighted bound with the
    exponential in front of both terms when ``s >= 0``.
    """
    api = np.abs(np.asarray(pi, dtype=float))
    half = 0.5 * (gas.gamma0 - 1.0)
    if formulation == "isentropic":
        return half * api * (1.0 + gas.b_tilde * _pow0(api, gas.nu - 1.0)) + u_norm
    if formulation == "general":
        s = np.asarray(s, dtype=float)
        return u_norm + np.exp(s / (2 * gas.gamma0 * gas.c_v)) * pressure_coupling(api, s, gas)
    raise ValueError(f"unknown formulation {formulation!r}")


def max_propagation_speed(pi, u, s, gas, formulation="isentropic", region=None):
    """Strict maximum of :func:`local_speed` over the cells selected by ``region``.

    ``u`` has its components on the leading axis, ``(d, *grid)``. ``region`` is
    an optional boolean mask over the grid.
    """
    pi = np.asarray(pi, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == pi.ndim:
        u = u[None]
    u_norm = np.sqrt(np.sum(u**2, axis=0))
    speed = local_speed(pi, u_norm, 0.0 if s is None else s, gas, formulation)
    speed = np.broadcast_to(speed, pi.shape)
    if region is not None:
        speed = speed[np.asarray(region, dtype=bool)]
    if speed.size == 0:
        raise ValueError("empty region")
    return float(np.max(speed))


def residual(fields, derivs, t, gas, formulation="general", theta=None):
    """Pointwise residual of the ``(pi, u, s)`` system for caller-supplied exact derivatives.

    ``fields`` holds ``pi`` (array), ``u`` (``(d, ...)``) and ``s``. ``derivs``
    holds ``pi_t``, ``u_t``, ``s_t`` and the spatial gradients ``pi_x``
    (``(d, ...)``), ``u_x`` (``(d, d, ...)``, ``u_x[i, j] = d u_i / d x_j``), ``s_x``.

    ``isentropic`` evaluates the two-equation system with ``s = 0`` and returns
    ``(r_pi, r_u)``; ``general`` returns ``(r_pi, r_u, r_s)`` in the weighted
    form where the first row carries ``e^{s/(g0 c_v)}`` and the last
    ``(1+t)^-theta``.
    """
    pi = np.asarray(fields["pi"], dtype=float)
    u = np.asarray(fields["u"], dtype=float)
    d = u.shape[0]
    pi_x = np.asarray(derivs["pi_x"], dtype=float)
    u_x = np.asarray(derivs["u_x"], dtype=float)
    half = 0.5 * (gas.gamma0 - 1.0)
    adv_pi = sum(u[j] * pi_x[j] for j in range(d))
    div_u = sum(u_x[j, j] for j in range(d))
    adv_u = np.stack([sum(u[j] * u_x[i, j] for j in range(d)) for i in range(d)])
    if formulation == "isentropic":
        coef = half * pi * (1.0 + gas.b_tilde * _pow0(pi, gas.nu - 1.0))
        r_pi = derivs["pi_t"] + adv_pi + coef * div_u
        r_u = derivs["u_t"] + adv_u + coef * pi_x
        return r_pi, r_u
    if formulation != "general":
        raise ValueError(f"unknown formulation {formulation!r}")
    s = np.asarray(fields["s"], dtype=float)
    E = _entropy_weight(s, gas)
    vdw = half * gas.b_tilde * _pow0(pi, gas.nu)
    r_pi = E * (derivs["pi_t"] + adv_pi) + half * E * pi * div_u + vdw * div_u
    r_u = derivs["u_t"] + adv_u + (half * E * pi + vdw) * pi_x
    s_x = np.asarray(derivs["s_x"], dtype=float)
    weight = 1.0 if theta is None else (1.0 + t) ** (-theta)
    r_s = weight * (derivs["s_t"] + sum(u[j] * s_x[j] for j in range(d)))
    return r_pi, r_u, r_s
