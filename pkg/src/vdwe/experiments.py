"""Experiment pipelines behind the command-line subcommands.

Each pipeline takes a validated :class:`SimulationConfig` and returns a
:class:`RunRecord` whose ``checks`` decide the exit status.
"""

import numpy as np

from . import symsys, thermo
from .background import BackgroundFlow, InitialVelocity, check_H3
from .diagnostics import (
    DegenerateWindowError,
    NormConfig,
    decay_fit,
    envelope_check,
    nu_star,
    weighted_norms,
)
from .errors import SimulationError
from .inequalities import inequality_suite, sup_norm_ratios
from .io import RunRecord
from .solver import FieldSet, Grid, SchemeConfig, Stepper, cone_agreement_test, run

RHO_MARGIN = 1e-8
STABILITY = 0.2


def norm_config(cfg):
    gas = cfg.gas_parameters()
    form = cfg.scheme.formulation
    theta = cfg.theta() if form == "general" else None
    return NormConfig(cfg.diagnostics.m, cfg.grid.d, gas.gamma0, form, theta)


def _rel_drift(values, scale):
    values = np.asarray(values, dtype=float)
    dev = float(np.max(np.abs(values - values[0]))) if values.size else 0.0
    if dev == 0.0:
        return 0.0
    return dev / scale if scale > 0 else np.inf


def conservation_drift(series):
    """Relative drifts of mass, momentum and energy over the samples flagged valid.

    Momentum is measured against ``sqrt(2 mass energy)``, which bounds
    ``|int rho u|`` by Cauchy-Schwarz and stays meaningful when the total
    momentum vanishes by symmetry.
    """
    ok = np.asarray(series.conservation_valid, dtype=bool)
    mass = np.asarray(series.mass)[ok]
    energy = np.asarray(series.energy)[ok]
    mom = series.momentum_array()[ok]
    if mass.size == 0:
        return {"mass": np.nan, "momentum": np.nan, "energy": np.nan, "samples": 0}
    mom_scale = np.sqrt(2.0 * abs(mass[0]) * abs(energy[0]))
    mom_dev = np.linalg.norm(mom - mom[0], axis=1)
    return {
        "mass": _rel_drift(mass, abs(mass[0])),
        "momentum": _rel_drift(mom_dev, mom_scale),
        "energy": _rel_drift(energy, abs(energy[0])),
        "samples": int(mass.size),
    }


def sup_norm_stability(series, beta, t_lo=1.0, coarse_every=10):
    """Empirical constants of the sup-norm bounds and their stability under time refinement.

    Returns ``(max_ratio (3,), enrichment (3,))`` where ``enrichment`` is the
    max over every sample divided by the max over every ``coarse_every``-th.
    """
    t = series.t
    sel = t >= t_lo - 1e-12
    if not np.any(sel) or series.Z is None:
        return None, None
    ratios = sup_norm_ratios(t[sel], series.sup_array()[sel], series.Z[sel], float(beta))
    if not np.all(np.isfinite(ratios)):
        return None, None
    full = ratios.max(axis=0)
    coarse = ratios[::coarse_every].max(axis=0)
    return full, full / coarse


def analyse_series(series, cfg, record):
    """Fill ``record`` with the decay, envelope, positivity, conservation and sup-norm checks."""
    gas = cfg.gas_parameters()
    dg = cfg.diagnostics
    nc = norm_config(cfg)
    general = cfg.scheme.formulation == "general"
    t = series.t
    values = series.N_array() if general else series.Y_array()
    t_end = float(t[-1]) if t.size else 0.0
    checks, summary = record.checks, record.summary
    summary["norm r"] = str(nc.r)
    summary["norm a"] = str(nc.a)
    summary["g_k"] = ", ".join(str(g) for g in nc.g_list)
    summary["beta"] = str(nc.beta)
    trivial = not np.any(values)

    # comparison-function envelope with C calibrated on the initial window
    nu = nu_star(gas, dg.m, cfg.scheme.formulation)
    try:
        env = envelope_check(t, values, nc, nu, dg.calibration_window, t_max=t_end)
        series.Z, series.zeta = weighted_norms(t, values, nc, env.C_fit)
        summary["C_fit"] = env.C_fit
        summary["nu_star"] = nu
        summary["epsilon0 threshold"] = env.threshold
        summary["zeta(0)"] = env.zeta0
        summary["envelope margin"] = env.margin
        summary["envelope first violation"] = env.first_violation
        checks["envelope"] = env.holds
        record.plots["envelope"] = (t, series.zeta, "t zeta")
    except ValueError as exc:
        series.Z, series.zeta = weighted_norms(t, values, nc, 0.0)
        summary["envelope"] = f"calibration failed: {exc}"
        checks["envelope"] = False

    # decay exponents
    window = (dg.fit_lo, min(dg.fit_hi, t_end))
    fits = {}
    if trivial:
        summary["decay fits"] = "skipped: the perturbation is identically zero"
    else:
        for k in range(min(2, dg.m) + 1):
            try:
                fit = decay_fit(t, values[:, k], k, window)
            except DegenerateWindowError as exc:
                summary[f"p_{k}"] = f"skipped: {exc}"
                continue
            pred = float(nc.predicted_exponent(k))
            fits[k] = fit
            summary[f"p_{k}"] = f"{fit.exponent:.4f} (bound {pred:+.4f} + {dg.slack}, residual {fit.residual:.2e})"
            checks[f"decay k={k}"] = fit.passes(pred, dg.slack)
    record.report = fits

    # positivity and covolume bound
    pi_scale = series.max_pi[0] if series.max_pi else 0.0
    min_pi = float(np.min(series.min_pi)) if len(series) else 0.0
    summary["min pi / max pi0"] = min_pi / pi_scale if pi_scale > 0 else min_pi
    checks["positivity"] = min_pi >= -dg.positivity_check * pi_scale
    if gas.b > 0:
        max_rho = float(np.max(series.max_rho)) if len(series) else 0.0
        summary["max rho * b"] = max_rho * gas.b
        checks["covolume bound"] = max_rho <= (1.0 - RHO_MARGIN) / gas.b
    record.plots["min_pi_relative"] = (t, np.asarray(series.min_pi) / (pi_scale or 1.0), "t min_pi/max_pi0")

    # conservation
    drift = conservation_drift(series)
    summary["conservation samples"] = f"{drift['samples']} of {len(series)}"
    for name in ("mass", "momentum", "energy"):
        summary[f"{name} drift"] = drift[name]
        checks[f"{name} conservation"] = bool(drift[name] <= dg.conservation_tolerance)

    # sup-norm bounds in terms of Z
    if not trivial:
        full, enrich = sup_norm_stability(series, nc.beta, dg.sup_norm_window)
        if full is None:
            summary["sup-norm constants"] = "undefined (Z vanishes or non-finite ratio)"
            checks["sup-norm constants"] = False
        else:
            summary["sup-norm constants"] = ", ".join(f"{v:.4g}" for v in full)
            summary["sup-norm enrichment"] = ", ".join(f"{v:.4f}" for v in enrich)
            checks["sup-norm constants"] = bool(np.all(enrich <= 1.0 + STABILITY))
    return record


def simulate(cfg, initial=None, forcing=None):
    """Reference run plus analysis. Returns ``(record, result, error)``.

    A simulation abort is returned, not raised, so that the partial series
    can still be analysed and written out.
    """
    if cfg.experiment.kind == "convergence":
        return convergence_record(cfg), None, None
    record = RunRecord(cfg)
    error = None
    try:
        result = run(cfg, initial=initial, forcing=forcing)
    except SimulationError as exc:
        error = exc
        result = getattr(exc, "result", None)
        if result is None:
            raise
    record.series = result.series
    record.events = list(result.events)
    record.snapshots = list(result.snapshots)
    record.summary["steps"] = result.steps
    record.summary["wall time [s]"] = round(result.wall_time, 3)
    record.summary["completed"] = result.completed
    record.summary["hyperviscosity mu"] = cfg.scheme.mu
    if result.buffer_contact is not None:
        record.summary["buffer contact at t"] = result.buffer_contact
    if len(result.series):
        analyse_series(result.series, cfg, record)
    if error is not None:
        record.checks["run completed"] = False
    return record, result, error


def diagnose(cfg, series):
    """Re-analyse a recorded series (for example one read from ``series.csv``)."""
    record = RunRecord(cfg, series=series)
    return analyse_series(series, cfg, record)


# cone test

def cone_levels(cfg):
    return [int(v) for v in cfg.experiment.cone_levels.split(",")]


def cone_record(cfg):
    e = cfg.experiment
    rep = cone_agreement_test(cfg, e.cone_x0, e.cone_radius, e.cone_control, cone_levels(cfg))
    record = RunRecord(cfg)
    record.report = rep
    s = record.summary
    s["control"] = rep.control
    s["levels"] = ", ".join(map(str, rep.levels))
    s["discrepancy"] = ", ".join(f"{v:.3e}" for v in rep.discrepancy)
    s["orders"] = ", ".join("n/a" if o is None else f"{o:.3f}" for o in rep.orders)
    s["M"] = rep.M
    s["T1"] = rep.T1
    disc = np.asarray(rep.discrepancy)
    if np.all(disc == 0):
        agree = True
    else:
        order = rep.observed_order
        agree = order is not None and order >= 3.5
    s["h-independent"] = bool(np.all(disc > 0) and disc.max() <= (1.0 + STABILITY) * disc.min())
    record.checks["cone agreement"] = agree
    record.plots["cone_discrepancy"] = (rep.h, rep.discrepancy, "h discrepancy")
    return record


# equation of state and symmetrizer

ROUND_TRIP_GAMMAS = (1.4, 2.0, 3.0)
ROUND_TRIP_BS = (0.0, 0.1, 1.0)


def _gas(gamma0, b, c_v=1.0):
    return thermo.derive_constants(b, (gamma0 - 1.0) * c_v, c_v)


def round_trip_error(gammas=ROUND_TRIP_GAMMAS, bs=ROUND_TRIP_BS, n_rho=200, n_s=21):
    """Max relative error of ``rho -> pi -> rho`` over the admissible grid."""
    worst = 0.0
    for g0 in gammas:
        for b in bs:
            gas = _gas(g0, b)
            rho_hi = 0.99 / b if b > 0 else 10.0
            rho, s = np.meshgrid(np.linspace(0.0, rho_hi, n_rho), np.linspace(-1.0, 1.0, n_s), indexing="ij")
            back = thermo.rho_from_pi(thermo.pi_from_state(rho, s, gas), s, gas)
            err = np.abs(back - rho) / np.maximum(rho, 1e-300)
            worst = max(worst, float(np.max(err)))
    return worst


def random_states(rng, n, gammas=ROUND_TRIP_GAMMAS, bs=ROUND_TRIP_BS):
    """``n`` random admissible ``(gas, rho, s)`` triples with ``rho > 0``."""
    out = []
    for _ in range(n):
        gas = _gas(rng.choice(gammas), rng.choice(bs), c_v=rng.uniform(0.5, 2.0))
        rho_hi = 0.99 / gas.b if gas.b > 0 else 10.0
        out.append((gas, rng.uniform(1e-3, 1.0) * rho_hi, rng.uniform(-1.0, 1.0)))
    return out


def identity_residuals(rng, n=10_000):
    """Worst residual of each thermodynamic identity over ``n`` random states."""
    worst = {}
    for gas, rho, s in random_states(rng, n):
        res = thermo.thermo_identity_suite(thermo.ThermoState(rho, s), gas)
        for key in ("delta_cv", "gamma_star", "fd_sound_speed", "fd_G"):
            worst[key] = max(worst.get(key, 0.0), float(res[key]))
        # sign constraints: record the smallest value, which must be >= 0 (> 0 for Gamma, G)
        for key in ("convexity", "Gamma", "G"):
            worst[f"min {key}"] = min(worst.get(f"min {key}", np.inf), float(res[key]))
    return worst


def symmetry_residuals(rng, n=10_000, d_choices=(1, 2, 3)):
    """Worst ``||SA - (SA)^T||_inf / ||SA||_inf`` for both symmetrizations."""
    worst_vac, worst_cls = 0.0, 0.0
    for i in range(n):
        gas = _gas(rng.choice(ROUND_TRIP_GAMMAS), rng.choice(ROUND_TRIP_BS))
        d = int(rng.choice(d_choices))
        xi = rng.normal(size=d)
        u = rng.normal(size=d)
        s = rng.uniform(-1.0, 1.0)
        pi = 0.0 if i % 10 == 0 else rng.uniform(0.0, 5.0)
        A, S = symsys.assemble_symbol(xi, pi, u, s, gas)
        SA = S @ A
        worst_vac = max(worst_vac, np.max(np.abs(SA - SA.T)) / np.max(np.abs(SA)))
        rho_hi = 0.99 / gas.b if gas.b > 0 else 10.0
        rho = 1e-6 + rng.uniform() * (rho_hi - 1e-6)
        At, D = symsys.classical_symmetrizer(xi, rho, u, s, gas)
        DA = D @ At
        worst_cls = max(worst_cls, np.max(np.abs(DA - DA.T)) / np.max(np.abs(DA)))
    return float(worst_vac), float(worst_cls)


def eos_record(cfg, samples=10_000):
    rng = np.random.default_rng(cfg.experiment.seed)
    record = RunRecord(cfg)
    rt = round_trip_error()
    ident = identity_residuals(rng, samples)
    vac, cls = symmetry_residuals(rng, samples)
    s = record.summary
    s["round trip max rel error"] = rt
    for k, v in ident.items():
        s[k] = v
    s["symmetrizer (pi, u, s) asymmetry"] = vac
    s["symmetrizer (p, u, s) asymmetry"] = cls
    c = record.checks
    c["round trip"] = rt <= 1e-12
    c["delta c_v = p v / T"] = ident["delta_cv"] <= 1e-12
    c["gamma* identity"] = ident["gamma_star"] <= 1e-12
    c["fundamental derivative (fd)"] = ident["fd_G"] <= 1e-6
    c["sound speed (fd)"] = ident["fd_sound_speed"] <= 1e-6
    c["sign constraints"] = ident["min convexity"] >= 0 and ident["min Gamma"] > 0 and ident["min G"] > 0
    c["vacuum symmetrizer"] = vac <= 1e-13
    c["classical symmetrizer"] = cls <= 1e-13
    return record


# background flow

def shooting_foot(velocity, t, x, scan=4001, width=None):
    """Scalar characteristic foot by a dense scan for a sign change, then bisection."""
    x = float(x)
    width = width or (abs(x) + 10.0)

    def G(y):
        return y + t * float(velocity(np.array([[y]]))[0, 0]) - x

    ys = np.linspace(x - width, x + width, scan)
    vals = ys + t * velocity(ys[:, None])[:, 0] - x
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if idx.size == 0:
        exact = np.nonzero(vals == 0)[0]
        if exact.size:
            return float(ys[exact[0]])
        raise ValueError("no sign change in the scan window")
    lo, hi = ys[idx[0]], ys[idx[0] + 1]
    glo = G(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        gm = G(mid)
        if gm == 0:
            return mid
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def background_record(cfg, times=(0.0, 1.0, 10.0, 100.0)):
    record = RunRecord(cfg)
    s, c = record.summary, record.checks
    lin = BackgroundFlow(InitialVelocity("linear", 1))
    x = np.linspace(-20.0, 20.0, 401)[:, None]
    err = 0.0
    for t in times:
        b = lin.evaluate(t, x)
        scale = 1.0 + np.abs(x)
        err = max(
            err,
            float(np.max(np.abs(b.ubar - x / (1 + t)) / scale)),
            float(np.max(np.abs(b.dubar[..., 0, 0] - 1 / (1 + t)))),
            float(np.max(np.abs(b.K))),
        )
    s["linear profile max error"] = err
    c["linear closed form"] = err <= 1e-10

    vel = InitialVelocity("linear_tanh", 1, alpha=0.1)
    flow = BackgroundFlow(vel)
    pts = [(2.0, 1.0)] + [(t, xx) for t in (0.5, 1.0, 10.0, 100.0) for xx in (-7.0, -0.3, 0.0, 0.8, 5.0, 60.0)]
    shoot = 0.0
    for t, xx in pts:
        y_newton = float(flow.foot(t, np.array([[xx]]))[0, 0])
        y_shoot = shooting_foot(vel, t, xx)
        u_n = float(vel(np.array([[y_newton]]))[0, 0])
        u_s = float(vel(np.array([[y_shoot]]))[0, 0])
        shoot = max(shoot, abs(u_n - u_s))
    s["Newton vs shooting max |ubar difference|"] = shoot
    c["Newton vs shooting"] = shoot <= 1e-10

    # K and D^2 ubar along the image of a fixed foot grid, which covers the sup over x
    y = np.linspace(-8.0, 8.0, 4001)[:, None]
    ts = np.linspace(0.0, 100.0, 201)
    Kmax, D2 = [], []
    for t in ts:
        xt = y + t * vel(y)
        b = flow.evaluate(t, xt, hessian=True)
        Kmax.append(float(np.max(np.abs(b.K))))
        D2.append(float(np.max(np.abs(b.hessian))))
    Kmax, D2 = np.array(Kmax), np.array(D2)
    half = ts <= 50.0
    s["sup K on [0, 50]"] = float(Kmax[half].max())
    s["sup K on [0, 100]"] = float(Kmax.max())
    c["K bounded"] = bool(np.all(np.isfinite(Kmax)) and Kmax.max() <= (1.0 + 0.05) * Kmax[half].max())
    fit = decay_fit(ts, D2, 2, (10.0, 100.0))
    s["D2 ubar decay exponent"] = fit.exponent
    c["D2 ubar decay"] = fit.exponent <= -2.7
    record.plots["K_sup"] = (ts, Kmax, "t sup|K|")
    record.plots["D2ubar_sup"] = (ts, D2, "t sup|D2 ubar|")

    gap = check_H3(vel, np.linspace(-50, 50, 2001)[:, None])
    s["spectral gap (linear_tanh)"] = gap
    c["expansivity"] = gap > 0
    return record


# inequality suite

def inequality_record(cfg, enrichment=10):
    e = cfg.experiment
    rep = inequality_suite(samples=e.samples * enrichment, seed=e.seed, m=cfg.diagnostics.m)
    record = RunRecord(cfg)
    record.report = rep
    stab = rep.stability(e.samples)
    for name, st in rep.stats.items():
        tag = " (informational)" if name in rep.informational else ""
        record.summary[name + tag] = (
            f"max ratio {st.max_ratio:.4g}, enrichment {stab[name]:.4f}, skipped {st.skipped}"
        )
    for name in rep.gated():
        ok = stab[name] is not None and np.isfinite(rep.stats[name].max_ratio)
        record.checks[name] = bool(ok and stab[name] <= 1.0 + STABILITY)
    return record


# manufactured solutions

MMS_BOX = 12.0
MMS_T = 1.0


def manufactured_state(t, x, gas, formulation="general"):
    """Smooth exact ``(pi, u, s)`` over the linear background with analytic derivatives.

    Returns ``(fields, derivs, ubar)`` in the layout of :func:`symsys.residual`.
    """
    x = np.asarray(x, dtype=float)
    phi = np.exp(-x**2)
    dphi = -2.0 * x * phi
    a, da = 0.5 + 0.2 * np.sin(2 * t), 0.4 * np.cos(2 * t)
    c, dc = 0.3 * np.cos(t), -0.3 * np.sin(t)
    q, dq = (0.2 * np.sin(t), 0.2 * np.cos(t)) if formulation == "general" else (0.0, 0.0)
    ubar = x / (1.0 + t)
    fields = {"pi": a * phi, "u": (ubar + c * phi)[None], "s": q * phi}
    derivs = {
        "pi_t": da * phi,
        "u_t": (-x / (1.0 + t) ** 2 + dc * phi)[None],
        "s_t": dq * phi,
        "pi_x": (a * dphi)[None],
        "u_x": (1.0 / (1.0 + t) + c * dphi)[None, None],
        "s_x": (q * dphi)[None],
    }
    return fields, derivs, ubar


def manufactured_forcing(grid, gas, formulation="general"):
    """``forcing(t)`` that makes :func:`manufactured_state` an exact solution of the solver's system."""
    x = grid.axis()

    def forcing(t):
        fields, derivs, _ = manufactured_state(t, x, gas, formulation)
        if formulation == "general":
            r_pi, r_u, r_s = symsys.residual(fields, derivs, t, gas, "general")
            E = symsys._entropy_weight(fields["s"], gas)
            return r_pi / E, r_u, r_s
        r_pi, r_u = symsys.residual(fields, derivs, t, gas, "isentropic")
        return r_pi, r_u, np.zeros_like(r_pi)

    return forcing


def _mms_fields(grid, gas, t, formulation):
    fields, _, ubar = manufactured_state(t, grid.axis(), gas, formulation)
    return FieldSet(fields["pi"].copy(), fields["u"] - ubar[None], fields["s"].copy(), t)


def _mms_solve(N, gas, formulation, mu, cfl=0.4, steps=None, forcing=None):
    grid = Grid(1, N, MMS_BOX, MMS_T)
    scheme = SchemeConfig(4, cfl, mu, np.inf, formulation, 0.5 if formulation == "general" else None)
    flow = BackgroundFlow(InitialVelocity("linear", 1))
    forcing = forcing or manufactured_forcing(grid, gas, formulation)
    stepper = Stepper(grid, gas, scheme, flow, forcing)
    f = _mms_fields(grid, gas, 0.0, formulation)
    if steps is None:
        dt0 = stepper.dt(f)
        steps = int(np.ceil(MMS_T / dt0))
    dt = MMS_T / steps
    for _ in range(steps):
        f = stepper.step(f, dt)
    f.t = MMS_T
    return grid, f


def _max_error(grid, f, gas, formulation, exact=None):
    ex = exact if exact is not None else _mms_fields(grid, gas, MMS_T, formulation)
    return max(
        float(np.max(np.abs(f.pi - ex.pi))),
        float(np.max(np.abs(f.w - ex.w))),
        float(np.max(np.abs(f.s - ex.s))),
    )


def convergence_study(gas, formulation="general", levels=(128, 256, 512), mu=0.02, forcing_factory=None,
                      time_steps=(160, 320, 640)):
    """Observed spatial and temporal orders on the manufactured solution.

    Space: errors against the exact solution at a fixed CFL number. Time: at
    the finest grid, errors against a run with 8x the finest step count, so
    that the spatial error cancels.
    """
    make = forcing_factory or (lambda grid: manufactured_forcing(grid, gas, formulation))
    space = []
    for N in levels:
        grid = Grid(1, N, MMS_BOX, MMS_T)
        grid, f = _mms_solve(N, gas, formulation, mu, forcing=make(grid))
        space.append(_max_error(grid, f, gas, formulation))
    N = levels[-1]
    grid = Grid(1, N, MMS_BOX, MMS_T)
    _, ref = _mms_solve(N, gas, formulation, mu, steps=8 * time_steps[-1], forcing=make(grid))
    time_err = []
    for n in time_steps:
        _, f = _mms_solve(N, gas, formulation, mu, steps=n, forcing=make(grid))
        time_err.append(_max_error(grid, f, gas, formulation, exact=ref))
    order = lambda e: [float(np.log2(a / b)) for a, b in zip(e[:-1], e[1:])]
    return {
        "levels": list(levels), "space_error": space, "space_order": order(space),
        "time_steps": list(time_steps), "time_error": time_err, "time_order": order(time_err),
    }


def convergence_record(cfg):
    gas = cfg.gas_parameters()
    res = convergence_study(gas, cfg.scheme.formulation, mu=cfg.scheme.mu)
    record = RunRecord(cfg)
    record.report = res
    s = record.summary
    s["levels"] = ", ".join(map(str, res["levels"]))
    s["space error"] = ", ".join(f"{e:.3e}" for e in res["space_error"])
    s["space order"] = ", ".join(f"{o:.3f}" for o in res["space_order"])
    s["time steps"] = ", ".join(map(str, res["time_steps"]))
    s["time error"] = ", ".join(f"{e:.3e}" for e in res["time_error"])
    s["time order"] = ", ".join(f"{o:.3f}" for o in res["time_order"])
    record.checks["spatial order >= 3.5"] = min(res["space_order"]) >= 3.5
    record.checks["temporal order >= 3.5"] = min(res["time_order"]) >= 3.5
    return record
