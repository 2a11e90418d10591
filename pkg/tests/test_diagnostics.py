import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from vdwe import diagnostics as dg
from vdwe.solver import FieldSet, Grid, bump

from conftest import make_gas


def fieldset(grid, pi, w=None, s=None, t=0.0):
    w = np.zeros((grid.d,) + grid.shape) if w is None else w
    s = np.zeros(grid.shape) if s is None else s
    return FieldSet(pi, w, s, t)


def test_reference_exponents():
    nc = dg.NormConfig(3, 1, 3.0)
    assert nc.r == Fraction(1, 2)
    assert nc.a == 2
    assert nc.g_list == [Fraction(-3, 2), Fraction(-1, 2), Fraction(1, 2), Fraction(3, 2)]
    assert nc.beta == 0
    assert nc.predicted_exponent(2) == Fraction(-5, 2)


@given(g0=st.sampled_from([1.4, 5 / 3, 2.0, 3.0, 4.0]), d=st.sampled_from([1, 2]), m=st.integers(0, 4))
def test_isentropic_exponent_arithmetic(g0, d, m):
    nc = dg.NormConfig(m, d, g0)
    assert nc.beta == 0 and isinstance(nc.beta, Fraction)
    assert nc.r == min(1 - Fraction(d, 2), (Fraction(g0).limit_denominator(1000) / 2 - 1) * d)
    for k in range(m + 1):
        assert k + nc.r == nc.g(k) + nc.a


@given(theta=st.sampled_from([0.1, 0.25, 0.5, 1.0]), d=st.sampled_from([1, 2]), m=st.integers(0, 4))
def test_general_exponent_arithmetic(theta, d, m):
    nc = dg.NormConfig(m, d, 3.0, "general", theta)
    assert nc.a == 1 + Fraction(theta).limit_denominator(1000) / 2
    assert nc.beta == 0
    for k in range(m + 1):
        assert k + nc.r == nc.g(k) + nc.a


def test_norm_config_rejects_bad_input():
    with pytest.raises(ValueError):
        dg.NormConfig(2, 1, 3.0, "general")
    with pytest.raises(ValueError):
        dg.NormConfig(1.5, 1, 3.0)
    with pytest.raises(ValueError):
        dg.NormConfig(2, 1, 3.0, "adiabatic")


def test_zero_field_has_zero_norms(gas3):
    grid = Grid(1, 64, 10.0)
    Y, N = dg.sobolev_norms(fieldset(grid, np.zeros(64)), 3, "isentropic", grid)
    assert np.all(Y == 0) and np.all(N == 0)


@pytest.mark.filterwarnings("ignore::vdwe.diagnostics.AliasingWarning")
def test_sine_has_equal_norms_at_every_order():
    grid = Grid(1, 64, 2 * np.pi)
    x = grid.axis()
    Y, _ = dg.sobolev_norms(fieldset(grid, np.sin(x)), 4, "isentropic", grid)
    assert np.allclose(Y, np.sqrt(np.pi), rtol=1e-12)


def test_bump_L2_norm_against_quadrature():
    grid = Grid(1, 1024, 8.0)
    eps = 1e-2
    pi = eps * bump(np.abs(grid.axis()))
    Y, _ = dg.sobolev_norms(fieldset(grid, pi), 0, "isentropic", grid)
    oracle = np.sqrt(quad(lambda x: (eps * np.exp(1 - 1 / (1 - x * x))) ** 2, -1, 1, epsabs=1e-16, epsrel=1e-14)[0])
    assert Y[0] == pytest.approx(oracle, rel=1e-10)


@pytest.mark.filterwarnings("ignore::vdwe.diagnostics.AliasingWarning")
def test_two_dimensional_sine_derivative_energy():
    grid = Grid(2, 32, 2 * np.pi)
    x, y = grid.coords()
    f = np.sin(x) * np.sin(2 * y)
    # |D f|^2 integrated: (1 + 4) pi^2; |D^2 f|^2: (1 + 4)^2 pi^2
    assert grid.integrate(dg.derivative_energy(f, 1, grid)) == pytest.approx(5 * np.pi**2, rel=1e-12)
    assert grid.integrate(dg.derivative_energy(f, 2, grid)) == pytest.approx(25 * np.pi**2, rel=1e-12)


def test_spectral_and_fd8_norms_agree():
    grid = Grid(1, 1024, 24.0)
    x = grid.axis()
    f = fieldset(grid, np.exp(-x**2), w=(0.3 * x * np.exp(-x**2))[None], s=0.1 * np.exp(-(x - 1) ** 2))
    Ys, _ = dg.sobolev_norms(f, 3, "general", grid, make_gas(3.0, 0.5, 0.5), 1.0)
    Yf = dg.fd_sobolev_norms(f, 3, "general", grid)
    assert np.allclose(Yf, Ys, rtol=1e-6)


def test_weighted_norm_of_general_state(gas3):
    grid = Grid(1, 256, 20.0)
    x = grid.axis()
    s = 0.2 * np.exp(-x**2)
    f = fieldset(grid, np.exp(-x**2), s=s, t=3.0)
    Y, N = dg.sobolev_norms(f, 2, "general", grid, gas3, 1.0)
    E = np.exp(s / (gas3.gamma0 * gas3.c_v))
    expected0 = np.sqrt(grid.integrate(E * f.pi**2) + grid.integrate(s**2) / 4.0)
    assert N[0] == pytest.approx(expected0, rel=1e-13)
    f0 = fieldset(grid, np.exp(-x**2), t=0.0)
    Y, N = dg.sobolev_norms(f0, 2, "general", grid, gas3, 1.0)
    assert np.allclose(N, Y, rtol=1e-15)


def test_aliasing_warning_when_fields_touch_edge():
    grid = Grid(1, 64, 4.0)
    with pytest.warns(dg.AliasingWarning):
        dg.sobolev_norms(fieldset(grid, np.ones(64)), 1, "isentropic", grid)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dg.sobolev_norms(fieldset(grid, bump(np.abs(grid.axis()))), 1, "isentropic", grid)


@pytest.mark.filterwarnings("ignore::vdwe.diagnostics.AliasingWarning")
def test_sup_norms_of_sine():
    grid = Grid(1, 128, 2 * np.pi)
    x = grid.axis()
    sup = dg.sup_norms(fieldset(grid, np.sin(3 * x)), "isentropic", grid)
    assert np.allclose(sup, [1.0, 3.0, 9.0], rtol=1e-3)


def test_weighted_norms_formulas():
    t = np.array([0.0, 1.0, 3.0])
    nc0 = dg.NormConfig(0, 1, 3.0)
    Y = np.array([[2.0], [1.0], [0.5]])
    Z, zeta = dg.weighted_norms(t, Y, nc0, 0.7)
    assert np.allclose(Z, (1 + t) ** -1.5 * Y[:, 0], rtol=1e-15)
    assert zeta[0] == pytest.approx(np.exp(0.7) * Z[0], rel=1e-15)
    Z, zeta = dg.weighted_norms(t, np.zeros((3, 4)), dg.NormConfig(3, 1, 3.0), 0.7)
    assert np.all(Z == 0) and np.all(zeta == 0)


def test_decay_fit_exact_power_law():
    t = np.linspace(5, 50, 200)
    fit = dg.decay_fit(t, (1 + t) ** -1.5, 0, (5, 50))
    assert fit.exponent == pytest.approx(-1.5, abs=1e-6)
    assert fit.residual < 1e-12
    assert fit.passes(-1.5, 0.0) and not fit.passes(-2.0, 0.2)


def test_decay_fit_two_term_series():
    t = np.linspace(5, 50, 200)
    fit = dg.decay_fit(t, 2 * (1 + t) ** -0.5 + (1 + t) ** -2, 0, (5, 50))
    assert -0.6 < fit.exponent < -0.5


def test_decay_fit_degenerate_windows():
    t = np.linspace(0, 10, 11)
    with pytest.raises(dg.DegenerateWindowError):
        dg.decay_fit(t, np.ones(11), 0, (20, 50))
    y = np.ones(11)
    y[7] = 0.0
    with pytest.raises(dg.DegenerateWindowError):
        dg.decay_fit(t, y, 0, (5, 10))


def test_comparison_function_values():
    cf = dg.comparison_ode(2.0, 2.0, 0.5)
    assert cf.f(1.0) == pytest.approx(0.5 * np.log(0.5), rel=1e-15)
    assert cf.f(1.0) == pytest.approx(-0.34657, abs=1e-5)
    for x in (0.01, 0.1, 1.0, 10.0):
        assert cf.f_inverse(cf.f(x)) == pytest.approx(x, rel=1e-14)
    xs = np.logspace(-8, 8, 400)
    assert np.all(np.diff(cf.f(xs)) > 0)
    assert cf.f(1e-100) < -100
    assert cf.epsilon0_threshold == pytest.approx(float(cf.f_inverse(-0.5)), rel=1e-15)
    with pytest.raises(ValueError):
        cf.f_inverse(0.0)


@given(nu=st.floats(2, 8), x=st.floats(1e-3, 1e3))
def test_comparison_inverse_property(nu, x):
    cf = dg.ComparisonFunction(nu, 1.5, 1.0)
    assert cf.f_inverse(cf.f(x)) == pytest.approx(x, rel=1e-11)


def test_envelope_solves_comparison_ode():
    """The envelope ``f^-1(f(z0) + G(t))`` satisfies ``(f(zeta))' = C (1+t)^-a``."""
    cf = dg.ComparisonFunction(2.0, 2.0, 0.3)
    t = np.linspace(0, 5, 2001)
    env = cf.envelope(t, 0.05)
    df = np.gradient(cf.f(env), t)
    assert np.allclose(df[5:-5], 0.3 * (1 + t[5:-5]) ** -2.0, rtol=1e-5)


def test_calibration_is_minimal():
    nc = dg.NormConfig(0, 1, 3.0)
    t = np.linspace(0, 1, 21)
    # zeta grows like exp(2t) on the window before any C correction
    Y = (1 + t) ** (-0.5) * 1e-3 * np.exp(2 * t)
    Y = Y[:, None]
    C = dg.calibrate_C(t, Y, nc, 2.0, 1.0)
    assert C > 0
    assert dg._envelope_holds(t, Y, nc, 2.0, C)
    assert not dg._envelope_holds(t, Y, nc, 2.0, 0.99 * C)


def test_envelope_check_trivial_and_decaying():
    nc = dg.NormConfig(1, 1, 3.0)
    t = np.linspace(0, 50, 501)
    rep = dg.envelope_check(t, np.zeros((501, 2)), nc, 2.0)
    assert rep.holds and rep.C_fit == 0
    Y = 1e-3 * np.stack([(1 + t) ** -0.5, (1 + t) ** -1.5], 1)
    rep = dg.envelope_check(t, Y, nc, 2.0)
    assert rep.holds


def test_nu_star(gas3):
    assert dg.nu_star(gas3, 3, "isentropic") == 2.0
    assert dg.nu_star(gas3, 3, "general") == 4
    assert dg.nu_star(make_gas(1.4, 0.0), 3, "general") == pytest.approx(6.0)
