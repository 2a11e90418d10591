"""Global smooth solution of the pressureless problem by characteristics.

Under the expansivity hypothesis the map ``y -> y + t u0(y)`` is a global
diffeomorphism for every ``t >= 0``; ``ubar(t, x) = u0(y)`` where ``y`` solves
``x = y + t u0(y)``. Points carry their coordinates on the last axis,
``x.shape == (..., d)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from .errors import CharacteristicInversionError, QuadratureError


class InitialVelocity:
    """Named smooth initial velocity ``u0: R^d -> R^d`` with its first two derivatives.

    Profiles
    --------
    ``linear``
        ``u0 = A x`` with ``A = scale*I`` (plus a rotation ``omega`` when ``d = 2``).
    ``linear_tanh``
        ``u0_i = scale*x_i + alpha*tanh(x_i)``.
    ``linear_bump``
        ``u0 = (scale + alpha*exp(-|x|^2/(2 width^2))) x``.
    """

    PROFILES = ("linear", "linear_tanh", "linear_bump")
    DEFAULTS = {
        "linear": {"scale": 1.0, "omega": 0.0},
        "linear_tanh": {"scale": 1.0, "alpha": 0.1},
        "linear_bump": {"scale": 1.0, "alpha": 0.2, "width": 1.0},
    }

    def __init__(self, name="linear", d=1, **params):
        if name not in self.PROFILES:
            raise ValueError(f"unknown initial velocity {name!r}; choose from {self.PROFILES}")
        if d not in (1, 2):
            raise ValueError("only d = 1 or d = 2 is supported")
        unknown = set(params) - set(self.DEFAULTS[name])
        if unknown:
            raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
        self.name = name
        self.d = d
        self.params = {**self.DEFAULTS[name], **{k: float(v) for k, v in params.items()}}
        if name == "linear" and d == 1 and self.params["omega"] != 0:
            raise ValueError("omega (rotation) needs d = 2")

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"InitialVelocity({self.name!r}, d={self.d}, {args})"

    def _matrix(self):
        p = self.params
        if self.d == 1:
            return np.array([[p["scale"]]])
        return np.array([[p["scale"], -p["omega"]], [p["omega"], p["scale"]]])

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        p = self.params
        if self.name == "linear":
            return y @ self._matrix().T
        if self.name == "linear_tanh":
            return p["scale"] * y + p["alpha"] * np.tanh(y)
        g = np.exp(-np.sum(y**2, axis=-1, keepdims=True) / (2 * p["width"] ** 2))
        return (p["scale"] + p["alpha"] * g) * y

    def jacobian(self, y):
        """``Du0[..., i, j] = d u0_i / d y_j``."""
        y = np.asarray(y, dtype=float)
        d = self.d
        p = self.params
        eye = np.eye(d)
        if self.name == "linear":
            return np.broadcast_to(self._matrix(), y.shape[:-1] + (d, d)).copy()
        if self.name == "linear_tanh":
            diag = p["scale"] + p["alpha"] / np.cosh(y) ** 2
            return diag[..., :, None] * eye
        w2 = p["width"] ** 2
        g = np.exp(-np.sum(y**2, axis=-1) / (2 * w2))[..., None, None]
        outer = y[..., :, None] * y[..., None, :]
        return p["scale"] * eye + p["alpha"] * g * (eye - outer / w2)

    def hessian(self, y):
        """``H[..., i, j, k] = d^2 u0_i / dy_j dy_k``."""
        y = np.asarray(y, dtype=float)
        d = self.d
        p = self.params
        H = np.zeros(y.shape[:-1] + (d, d, d))
        if self.name == "linear":
            return H
        if self.name == "linear_tanh":
            th = np.tanh(y)
            val = -2.0 * p["alpha"] * th / np.cosh(y) ** 2
            for i in range(d):
                H[..., i, i, i] = val[..., i]
            return H
        w2 = p["width"] ** 2
        g = np.exp(-np.sum(y**2, axis=-1) / (2 * w2))
        a = p["alpha"]
        eye = np.eye(d)
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    H[..., i, j, k] = a * g * (
                        -y[..., k] / w2 * (eye[i, j] - y[..., i] * y[..., j] / w2)
                        - (eye[i, k] * y[..., j] + y[..., i] * eye[j, k]) / w2
                    )
        return H


def half_line_distance(lam):
    """Distance of complex numbers to the closed half-line ``(-inf, 0]``."""
    lam = np.asarray(lam, dtype=complex)
    return np.where(lam.real <= 0, np.abs(lam.imag), np.abs(lam))


def check_H3(velocity, samples):
    """Minimum over ``samples`` of the distance from ``Spec(Du0(x))`` to ``(-inf, 0]``.

    A zero return means the expansivity hypothesis fails on the sample set.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, velocity.d)
    if samples.shape[0] == 0:
        raise ValueError("sample set is empty")
    try:
        eig = np.linalg.eigvals(velocity.jacobian(samples))
    except np.linalg.LinAlgError as exc:
        raise CharacteristicInversionError(f"eigensolver failed: {exc}") from exc
    return float(np.min(half_line_distance(eig)))


def _solve(J, G):
    if J.shape[-1] == 1:
        return G / J[..., 0]
    return np.linalg.solve(J, G[..., None])[..., 0]


def _inverse(J):
    if J.shape[-1] == 1:
        return 1.0 / J
    return np.linalg.inv(J)


def _min_real_part(velocity, samples):
    eig = np.linalg.eigvals(velocity.jacobian(samples))
    return float(np.min(eig.real))


@dataclass
class BackgroundSample:
    ubar: np.ndarray
    dubar: np.ndarray
    K: np.ndarray
    foot: np.ndarray
    hessian: np.ndarray = None


class BackgroundFlow:
    """Evaluator for ``ubar``, its Jacobian and the flow map of the pressureless problem."""

    def __init__(self, velocity, newton_tol=1e-14, max_iter=60, seed_samples=None):
        self.velocity = velocity
        self.newton_tol = newton_tol
        self.max_iter = max_iter
        d = velocity.d
        if seed_samples is None:
            grid = np.linspace(-10.0, 10.0, 41)
            seed_samples = np.stack(np.meshgrid(*([grid] * d), indexing="ij"), axis=-1).reshape(-1, d)
        self.lambda_min = max(_min_real_part(velocity, seed_samples), 1e-3)

    @property
    def d(self):
        return self.velocity.d

    def foot(self, t, x):
        """Solve ``x = y + t u0(y)`` for ``y`` by damped Newton iteration."""
        x = np.asarray(x, dtype=float)
        if t < 0:
            raise ValueError("t must be non-negative")
        if t == 0:
            return x.copy()
        u0 = self.velocity
        d = self.d
        eye = np.eye(d)
        y = x / (1.0 + t * self.lambda_min)
        G = y + t * u0(y) - x
        gnorm = np.linalg.norm(G, axis=-1)
        # residuals below this are rounding noise and need no line search
        floor = 4 * np.finfo(float).eps * (1.0 + t) * (1.0 + np.linalg.norm(x, axis=-1))
        for _ in range(self.max_iter):
            J = eye + t * u0.jacobian(y)
            step = _solve(J, G)
            lam = np.ones(gnorm.shape)
            for _ in range(40):
                y_new = y - lam[..., None] * step
                G_new = y_new + t * u0(y_new) - x
                gn_new = np.linalg.norm(G_new, axis=-1)
                bad = (gn_new > gnorm * (1 - 1e-4 * lam)) & (gn_new > floor)
                if not np.any(bad):
                    break
                lam = np.where(bad, 0.5 * lam, lam)
            y, G, gnorm = y_new, G_new, gn_new
            scale = 1.0 + np.linalg.norm(y, axis=-1)
            if np.all(np.linalg.norm(lam[..., None] * step, axis=-1) <= self.newton_tol * scale):
                break
        else:
            if np.any(gnorm > 1e-10 * (1.0 + t) * (1.0 + np.linalg.norm(x, axis=-1))):
                raise CharacteristicInversionError(
                    f"Newton did not converge at t={t}: max residual {np.max(gnorm):.3e}"
                )
        return y

    def evaluate(self, t, x, hessian=False):
        """``ubar``, ``Dubar = Du0 (I + t Du0)^-1`` and ``K = (1+t)^2 (Dubar - I/(1+t))``."""
        x = np.asarray(x, dtype=float)
        y = self.foot(t, x)
        u0 = self.velocity
        Du0 = u0.jacobian(y)
        eye = np.eye(self.d)
        P = _inverse(eye + t * Du0)
        dubar = Du0 @ P
        K = (1.0 + t) ** 2 * (dubar - eye / (1.0 + t))
        H = None
        if hessian:
            # D^2 ubar[i,k,l] = P_ia H0_abn P_bk P_nl
            H = np.einsum("...ia,...abn,...bk,...nl->...ikl", P, u0.hessian(y), P, P)
        return BackgroundSample(ubar=u0(y), dubar=dubar, K=K, foot=y, hessian=H)

    def flow_map(self, tau, t, x):
        """Position at time ``tau`` of the characteristic through ``(t, x)``."""
        y = self.foot(t, x)
        return y + tau * self.velocity(y)

    def density_transport(self, rho0, t, x, tol=1e-12):
        """``rho0(X(0;t,x)) exp(-int_0^t div ubar(tau, X(tau;t,x)) dtau)``.

        The time integral is computed by adaptive Gauss-Kronrod quadrature,
        vectorised over all points in ``x``.
        """
        x = np.asarray(x, dtype=float)
        y = self.foot(t, x)
        if t == 0:
            return np.asarray(rho0(y), dtype=float)

        def integrand(tau):
            X = y + tau * self.velocity(y)
            return np.trace(self.evaluate(tau, X).dubar, axis1=-2, axis2=-1).ravel()

        integral, err = quad_vec(integrand, 0.0, float(t), epsabs=tol, epsrel=0.0, norm="max")
        if not err <= 100 * tol:
            raise QuadratureError(f"divergence integral error estimate {err:.2e} exceeds tolerance")
        integral = integral.reshape(x.shape[:-1])
        return np.asarray(rho0(y), dtype=float) * np.exp(-integral)
