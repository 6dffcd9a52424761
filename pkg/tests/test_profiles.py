import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cr_henkin.errors import RangeError
from cr_henkin.profiles import (check_f_conditions, exponential, exponential_convex_limit,
                                f_inverse, monomial, negated)


@settings(max_examples=50, deadline=None)
@given(st.floats(1, 6), st.floats(1e-6, 10))
def test_monomial_inverse(m, s):
    f = monomial(m)
    assert f(f.inverse(s)) == pytest.approx(s, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(1e-3, 0.3))
def test_root_finder_matches_closed_inverse(a, s):
    f = exponential(a)
    t_closed = f.inverse(s)
    t_num = f_inverse(f, s)
    assert t_num == pytest.approx(float(t_closed), rel=1e-9)


def test_inverse_rejects_negative():
    with pytest.raises(RangeError):
        f_inverse(monomial(2), -1.0)


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_monomial_conditions(m):
    assert check_f_conditions(monomial(m), 200).passed


def test_exponential_conditions_hold_below_convex_limit():
    a = 0.5
    t0 = exponential_convex_limit(a)
    assert check_f_conditions(exponential(a), 200, t_max=0.9 * t0).passed
    assert not check_f_conditions(exponential(a), 200, t_max=10.0).passed
    assert check_f_conditions(exponential(a, extend=True), 200, t_max=10.0).passed


def test_negated_fails_first_derivative():
    rep = check_f_conditions(negated(monomial(2)), 50)
    assert not rep.passed and rep.first_violation == "F'>=0"


def test_exponential_log_no_underflow():
    f = exponential(0.5)
    assert f.log(np.array(1e-8)) == pytest.approx(-1e4)
    assert f(np.array(1e-8)) == 0.0
