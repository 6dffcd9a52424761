import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cr_henkin.errors import PreconditionError
from cr_henkin.geometry import Setting
from cr_henkin.profiles import exponential, monomial
from cr_henkin.type_analysis import (dyadic_integral, g_function, hardy_littlewood_modulus,
                                     holder_modulus, make_holder_modulus, power_modulus,
                                     type_integral_complex, type_integral_real)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.1, 2.0))
def test_dyadic_power_law(a, d):
    r = dyadic_integral(lambda t: t ** (-a), d)
    assert not r.divergent
    assert r.value == pytest.approx(d ** (1 - a) / (1 - a), rel=1e-8)


@pytest.mark.parametrize("fn", [lambda t: 1 / t, lambda t: t**-1.5, lambda t: 1 / (t * np.log(2 / t))])
def test_dyadic_divergence_flags(fn):
    assert dyadic_integral(fn, 1.0).divergent


@pytest.mark.parametrize("a", [0.25, 0.5, 0.75, 0.9])
def test_type_integral_convergent(a):
    r = type_integral_complex(exponential(a / 2), 1.0)
    assert not r.divergent
    assert r.value == pytest.approx(1 / (1 - a), rel=1e-6)
    r = type_integral_real(exponential(a / 2), 1.0)
    assert r.value == pytest.approx(1 / (1 - a) ** 2, rel=1e-6)


@pytest.mark.parametrize("a", [1.0, 1.25])
def test_type_integral_divergent(a):
    assert type_integral_complex(exponential(a / 2), 1.0).divergent


def test_finite_type_integral():
    # |log t^(2m)| integrates to 2m on [0, 1]
    assert type_integral_complex(monomial(3), 1.0).value == pytest.approx(6.0, rel=1e-9)


def test_type_integral_domain():
    with pytest.raises(PreconditionError):
        type_integral_complex(monomial(2), -1.0)


@pytest.mark.parametrize("m", [1, 2, 3, 5])
@pytest.mark.parametrize("d", [1.0, 0.25])
def test_holder_monomial(m, d):
    assert holder_modulus(monomial(m), Setting.COMPLEX, d).value == pytest.approx(
        d ** (-1 / (2 * m)) / (2 * m), abs=1e-9)


def test_holder_exponential_is_logarithmic():
    # sqrt(F*(t)) = log(1/t)^(-1/(2a)); the modulus integral diverges for a >= 1/2
    assert holder_modulus(exponential(1.0), Setting.COMPLEX, 0.1).divergent
    assert not holder_modulus(exponential(0.25), Setting.COMPLEX, 0.1).divergent


def test_family_takes_worst_member():
    a = holder_modulus([monomial(1), monomial(3)], Setting.COMPLEX, 0.25).value
    assert a == pytest.approx(holder_modulus(monomial(3), Setting.COMPLEX, 0.25).value)


@settings(max_examples=20, deadline=None)
@given(st.floats(1, 5), st.floats(1e-4, 0.5))
def test_gain_monomial(m, s):
    assert g_function([monomial(m)], Setting.COMPLEX, s) == pytest.approx(s ** (1 / (2 * m)))
    r = s ** (1 / (2 * m))
    assert g_function([monomial(m)], Setting.REAL, s) == pytest.approx(r * abs(np.log(r)))


def test_hardy_littlewood_power():
    r = hardy_littlewood_modulus(lambda t: t**0.5, 0.5)
    assert r.value == pytest.approx(1 / (2 * 0.5**0.5), rel=1e-8)
    with pytest.raises(PreconditionError):
        hardy_littlewood_modulus(lambda t: t**2, 0.5)


def test_holder_modulus_object():
    hm = make_holder_modulus([monomial(2)], Setting.COMPLEX)
    x = np.array([1.0, 4.0, 16.0])
    np.testing.assert_allclose(hm(x), x ** 0.25 / 4, rtol=1e-4)
    pm = power_modulus(0.5)
    assert float(pm(4.0)) == pytest.approx(2.0)


def test_real_type_integral_of_identity():
    # int_0^1 |log t| |log t^2| dt = 2 int_0^1 log^2 t dt = 4
    assert type_integral_real(monomial(1), 1.0).value == pytest.approx(4.0, abs=1e-6)


def test_gain_of_exponential_profile():
    # F(t) = exp(-1/sqrt t): F*(s) = log(1/s)^-2, so G(s) = 1 / log(1/s)
    for s in (0.1, 1e-3):
        assert g_function([exponential(0.5)], Setting.COMPLEX, s) == pytest.approx(1 / np.log(1 / s))
    # and the modulus integral int dt / (t log(1/t)) diverges
    assert holder_modulus(exponential(0.5), Setting.COMPLEX, 0.1).divergent


def test_gain_family_sup():
    s = 0.3
    assert g_function([monomial(1), monomial(2)], Setting.COMPLEX, s) == pytest.approx(s**0.25)


@pytest.mark.parametrize("g,s,expect", [
    (lambda t: t**0.5, 1.0, 0.5),
    (lambda t: t, 0.3, 1 / 0.3),
])
def test_hardy_littlewood_examples(g, s, expect):
    assert hardy_littlewood_modulus(g, s).value == pytest.approx(expect, rel=1e-9)


def test_hardy_littlewood_log_diverges():
    # G(t)/t = 1/(t |log t|) decreases only for t < 1/e
    assert hardy_littlewood_modulus(lambda t: 1 / abs(np.log(t)), 0.3).divergent


@pytest.mark.parametrize("m", [1, 2, 3])
def test_hardy_littlewood_of_gain_is_holder(m):
    f = [monomial(m)]
    d = 0.25
    hl = hardy_littlewood_modulus(lambda t: g_function(f, Setting.COMPLEX, t), d)
    assert hl.value == pytest.approx(holder_modulus(f, Setting.COMPLEX, d).value, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_modulus_monotone(d1, d2):
    lo, hi = sorted((d1, d2))
    f = monomial(2)
    assert holder_modulus(f, Setting.COMPLEX, lo).value >= holder_modulus(f, Setting.COMPLEX, hi).value


def test_lambda_norm_sphere(ball, rng):
    from cr_henkin.grids import build_boundary_grid
    from cr_henkin.type_analysis import lambda_f_norm
    G = build_boundary_grid(ball, resolution=24)
    assert lambda_f_norm(G, np.full(G.size, 2.5), power_modulus(0.5), 8, rng) == 2.5
    u = np.real(G.nodes[:, 0])
    a = lambda_f_norm(G, u, power_modulus(0.5), 16, np.random.default_rng(0))
    b = lambda_f_norm(G, u, power_modulus(0.5), 32, np.random.default_rng(0))
    assert np.isfinite(a) and abs(b - a) <= 0.1 * a
