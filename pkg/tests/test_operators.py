import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cr_henkin.errors import CRError, PreconditionError
from cr_henkin.grids import build_boundary_grid
from cr_henkin.operators import (DZB1, DZB1ZB2, Form01, PolyFormBasis, PolyFunction,
                                 compatibility_check, dbar_fd_residuals, henkin_solve, lp_norm,
                                 random_exact_form, tangential_part)
from cr_henkin.studies import incompatible_form, interior_points


def _fd_dz(f, z, j, bar, h=1e-5):
    e = np.zeros(2, complex)
    e[j] = h
    dx = (f(z + e) - f(z - e)) / (2 * h)
    dy = (f(z + 1j * e) - f(z - 1j * e)) / (2 * h)
    return 0.5 * (dx + 1j * dy) if bar else 0.5 * (dx - 1j * dy)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_poly_derivatives_match_fd(seed):
    rng = np.random.default_rng(seed)
    g, phi = random_exact_form(rng, 3)
    z = (rng.normal(size=(6, 2)) + 1j * rng.normal(size=(6, 2))) * 0.5
    for j in range(2):
        np.testing.assert_allclose(g.dz(j)(z), _fd_dz(g, z, j, False), atol=1e-8)
        np.testing.assert_allclose(phi(z)[:, j], _fd_dz(g, z, j, True), atol=1e-8)
    assert phi.closedness_residual(z) < 1e-7


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_basis_coefficients_reconstruct(seed):
    rng = np.random.default_rng(seed)
    basis = PolyFormBasis(2)
    _, phi = random_exact_form(rng, 3)
    c = basis.coefficients(phi)
    z = (rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2))) * 0.5
    np.testing.assert_allclose(np.einsum("r,r...->...", c, basis.stack(z)), phi(z), atol=1e-12)


def test_basis_degree_guard(rng):
    _, phi = random_exact_form(rng, 3)
    with pytest.raises(PreconditionError):
        PolyFormBasis(1).coefficients(phi)
    with pytest.raises(PreconditionError):
        PolyFormBasis(2).coefficients(DZB1)


def test_form_algebra():
    z = np.array([[0.3, 0.2j]])
    s = (DZB1 + DZB1ZB2).scale(2.0)
    np.testing.assert_allclose(s(z), 2 * (DZB1(z) + DZB1ZB2(z)))
    np.testing.assert_allclose(Form01.zero()(z), 0)


def test_non_closed_form_rejected():
    bad = Form01(lambda z: np.conj(z[..., 1]), lambda z: 0 * z[..., 0], "zb2 dzb1")
    with pytest.raises(CRError):
        bad.check_closed(np.array([[0.1, 0.2], [0.3j, 0.1]]))


def test_grid_measures(ball, ball_grid8):
    # |S^3| = 2 pi^2
    assert ball_grid8.area == pytest.approx(2 * np.pi**2, rel=1e-12)
    one = np.ones(ball_grid8.size)
    assert lp_norm(ball_grid8, one, 2) == pytest.approx(np.sqrt(2) * np.pi, rel=1e-12)
    assert lp_norm(ball_grid8, one, np.inf) == 1.0


def test_compatibility(ball_grid8):
    assert compatibility_check(ball_grid8, DZB1) < 1e-12
    assert compatibility_check(ball_grid8, DZB1ZB2) < 1e-12
    assert compatibility_check(ball_grid8, incompatible_form()) > 1.0


def test_tangential_part_of_normal_form(ball):
    # dbar rho is purely normal: its tangential part vanishes
    phi = Form01(lambda z: z[..., 0], lambda z: z[..., 1], "dbar |z|^2")
    z = np.array([[0.6, 0.8j], [0.0, 1.0]])
    np.testing.assert_allclose(tangential_part(ball, z, phi), 0, atol=1e-14)


def test_henkin_solution_deep_interior(ball, ball_grid8, ball_vgrid8, rng):
    # deep points need no near-field patches; u - zb1 must be holomorphic
    z = interior_points(ball, 12, rng, depth=0.6)
    u = henkin_solve(ball, ball_grid8, ball_vgrid8, DZB1)
    res = dbar_fd_residuals(u, DZB1, z, 1e-3, ball)
    assert np.max(res) < 5e-3


def test_henkin_rejects_incompatible(ball, ball_grid8, ball_vgrid8):
    with pytest.raises(CRError):
        henkin_solve(ball, ball_grid8, ball_vgrid8, incompatible_form())
