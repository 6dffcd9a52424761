import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cr_henkin.errors import CRError
from cr_henkin.geometry import (complex_normal, eval_rho, grad_rho, make_domain, outward_normal,
                                to_complex, to_real)
from cr_henkin.kernels import re_phi_lower_bound, support_phi

finite = st.floats(-3, 3, allow_nan=False)


@given(arrays(float, (5, 4), elements=finite))
def test_real_complex_roundtrip(x):
    np.testing.assert_array_equal(to_real(to_complex(x)), x)


def test_real_order():
    z = np.array([1 + 2j, 3 + 4j])
    np.testing.assert_array_equal(to_real(z), [1, 2, 3, 4])


def test_ball_rho(ball):
    z = np.array([[0.6, 0.8j], [0, 0], [0.3, 0.1]])
    np.testing.assert_allclose(eval_rho(ball, z), [0.0, -1.0, 0.1 - 1.0], atol=1e-14)


def test_ball_normal_is_radial(ball):
    z = np.array([[0.6, 0.8j], [1 / np.sqrt(2), 1j / np.sqrt(2)]])
    nu = outward_normal(ball, z)
    np.testing.assert_allclose(nu, to_real(z), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_grad_rho_matches_fd(r, a, b):
    dom = make_domain("dalpha", alpha=0.5)
    z = np.array([r * np.exp(1j * a) * 0.5, 0.05 * np.exp(1j * b)])
    g = grad_rho(dom, z)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2, complex)
        e[j] = h
        dx = (eval_rho(dom, z + e) - eval_rho(dom, z - e)) / (2 * h)
        dy = (eval_rho(dom, z + 1j * e) - eval_rho(dom, z - 1j * e)) / (2 * h)
        assert abs(g[j] - 0.5 * (dx - 1j * dy)) < 1e-5 * (1 + abs(g[j]))


@settings(max_examples=40, deadline=None)
@given(arrays(float, 4, elements=st.floats(-1, 1)), arrays(float, 4, elements=st.floats(-1, 1)))
def test_re_phi_bound_on_ball(a, b):
    # 2 Re Phi(zeta, z) >= rho(zeta) - rho(z) + |zeta1 - z1|^2 on the ball
    from cr_henkin.geometry import unit_ball
    dom = unit_ball()
    if np.linalg.norm(a) < 1e-3:
        return
    zeta = to_complex(a / np.linalg.norm(a))
    z = to_complex(b) * 0.7
    if eval_rho(dom, z) >= 0:
        return
    phi = support_phi(dom, zeta, z)
    assert 2 * np.real(phi) >= re_phi_lower_bound(dom, zeta, z) - 1e-12
    assert np.real(phi) > 0


def test_support_function_vanishes_on_diagonal(ball):
    z = np.array([0.6, 0.8j])
    assert abs(support_phi(ball, z, z)) < 1e-15


def test_complex_normal_unit(ball):
    nu = outward_normal(ball, np.array([[0.6, 0.8j]]))
    assert np.allclose(np.linalg.norm(complex_normal(nu), axis=-1), 1.0)


def test_unknown_family():
    with pytest.raises((CRError, ValueError)):
        make_domain("torus")
