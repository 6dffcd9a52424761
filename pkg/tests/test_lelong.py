import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cr_henkin.errors import ConfigError, DataError, PreconditionError, ResolutionError
from cr_henkin.lelong import (Divisor, Form11, Mollifier, Potential, blaschke_sum, ddbar_fd,
                              ddbar_fd_residuals, line_patch, load_divisor, mollify_log_modulus,
                              nevanlinna_pipeline, poly, rudin_residuals, rudin_solve, smoothstep)


def _pts(rng, n, scale=0.4):
    return (rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))) * scale


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 2), st.floats(-1, 2))
def test_smoothstep_monotone(a, b):
    lo, hi = sorted((a, b))
    P = smoothstep(np.array([lo, hi]), 0.0, 1.0)[0]
    assert 0 <= P[0] <= P[1] <= 1


def test_smoothstep_derivatives():
    s = np.linspace(0.05, 0.95, 19)
    P, d1, d2 = smoothstep(s, 0.0, 1.0)
    h = 1e-6
    np.testing.assert_allclose(d1, (smoothstep(s + h, 0, 1)[0] - smoothstep(s - h, 0, 1)[0]) / (2 * h),
                               rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(d2, (smoothstep(s + h, 0, 1)[1] - smoothstep(s - h, 0, 1)[1]) / (2 * h),
                               rtol=1e-5, atol=1e-6)


def test_rudin_constant_form(rng):
    z = _pts(rng, 50)
    f = rudin_solve(Form11.constant([[1, 0], [0, 0]]), z)
    np.testing.assert_allclose(f[:, 0], z[:, 0] / 2, atol=1e-15)
    np.testing.assert_allclose(f[:, 1], 0, atol=0)


def test_rudin_node_floor(rng):
    with pytest.raises(ResolutionError):
        rudin_solve(Form11.constant(np.eye(2)), _pts(rng, 2), nodes=8)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rudin_identities_polynomial_potential(seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=3)
    w = Potential(poly([((1, 0, 1, 0), 1.0), ((1, 1, 1, 1), abs(c[0])),
                        ((1, 0, 0, 1), c[1] + 1j * c[2]), ((0, 1, 1, 0), c[1] - 1j * c[2])]))
    alpha = Form11.from_potential(w)
    z = _pts(rng, 20)
    assert alpha.reality(z) == 1
    db, ident = rudin_residuals(alpha, z)
    assert db < 1e-6 and ident < 1e-6


def test_potential_ddbar_matches_fd(rng):
    w = Potential(poly([((1, 0, 1, 0), 1.0), ((1, 1, 1, 1), 0.5)]), cutoff=(0.1, 0.9))
    z = _pts(rng, 10, 0.3)
    A = Form11.from_potential(w, factor=1.0)(z)
    np.testing.assert_allclose(ddbar_fd(lambda x: np.real(w(x)), z, 1e-4), A, atol=1e-5)


def test_ddbar_of_norm_square(rng):
    z = _pts(rng, 5)
    np.testing.assert_allclose(ddbar_fd(lambda x: np.sum(np.abs(x) ** 2, -1), z, 1e-3),
                               np.broadcast_to(np.eye(2), (5, 2, 2)), atol=1e-9)
    res = ddbar_fd_residuals(lambda x: np.sum(np.abs(x) ** 2, -1), Form11.constant(1j * np.eye(2)),
                             z, 1e-3)
    assert np.max(res) < 1e-8


def test_positivity():
    z = np.array([[0.1, 0.2]])
    assert Form11.constant(1j * np.eye(2)).is_positive(z)
    assert not Form11.constant(-1j * np.eye(2)).is_positive(z)


def test_closedness():
    z = np.array([[0.1, 0.2], [0.3j, -0.1]])
    assert Form11.constant(np.eye(2)).closedness_residual(z) < 1e-12
    bad = Form11(lambda x: np.einsum("...,jk->...jk", np.conj(x[..., 1]), [[1, 0], [0, 0]]))
    with pytest.raises(DataError):
        bad.check_closed(z)


def test_mollifier_normalised():
    m = Mollifier(0.3)
    total = integrate.quad(lambda r: 2 * np.pi**2 * m.radial(r) * r**3, 0, m.support)[0]
    assert total == pytest.approx(1.0, rel=1e-9)
    assert integrate.quad(m.scaled, -m.support, m.support)[0] == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(PreconditionError):
        Mollifier(0.0)


def test_mollified_pluriharmonic_is_fixed(rng):
    # log|h| with h zero-free near z is pluriharmonic: mean values reproduce it
    h = lambda x: 2.0 + x[..., 0] + 0.5j * x[..., 1]  # noqa: E731
    z = _pts(rng, 6, 0.2)
    v = mollify_log_modulus(h, Mollifier(0.2), z)
    np.testing.assert_allclose(v, np.log(np.abs(h(z))), atol=1e-10)


def test_blaschke_oracles(ball):
    # int_{|z2|<1} (1 - |z2|^2) dA = pi / 2
    d0 = Divisor((line_patch(ball, (1, 0), 0j),))
    assert blaschke_sum(d0, ball) == pytest.approx(np.pi / 2, abs=1e-10)
    # {z1 = 0.3}: a disc of radius^2 0.91 at depth 0.91 - |z2|^2
    d1 = Divisor((line_patch(ball, (1, 0), 0.3),))
    assert blaschke_sum(d1, ball) == pytest.approx(np.pi * 0.91**2 / 2, rel=1e-10)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_blaschke_linear_in_multiplicity(ball, k):
    one = blaschke_sum(Divisor((line_patch(ball, (1, 1j), 0.2),)), ball)
    assert blaschke_sum(Divisor((line_patch(ball, (1, 1j), 0.2, k),)), ball) == k * one


def test_load_divisor(tmp_path, ball):
    p = tmp_path / "d.div"
    p.write_text("[patch.a]\nkind = line\nb = 1 0 0 0\nc = 0.3 0\nmultiplicity = 2\n"
                 "[patch.b]\nkind = poly\nz1 = 1 0 0.2 0\nz2 = 0 1 0.3 0; 1 1 0 0.1\n")
    d = load_divisor(p, ball)
    assert len(d.patches) == 2 and d.patches[0].multiplicity == 2
    assert d.lines[0][1] == 0.3


@pytest.mark.parametrize("body,field", [
    ("[patch.a]\nkind = line\nb = 1 0 0\n", "patch.a.b"),
    ("[patch.a]\nkind = line\nb = 1 0 0 0\ncolour = red\n", "patch.a.colour"),
    ("[patch.a]\nkind = cone\n", "patch.a.kind"),
    ("[patch.a]\nkind = line\nb = 1 0 0 0\nmultiplicity = 0\n", "patch.a.multiplicity"),
    ("[patch.a]\nkind = poly\nz1 = 1 0 0.2\nz2 = 0 1 1 0\n", "patch.a.z1"),
])
def test_divisor_errors(tmp_path, ball, body, field):
    p = tmp_path / "d.div"
    p.write_text(body)
    with pytest.raises(ConfigError) as err:
        load_divisor(p, ball)
    assert err.value.field == field and err.value.line is not None


def test_pipeline_rejects_missing_divisor(ball):
    with pytest.raises(DataError):
        nevanlinna_pipeline(lambda z: z[..., 0] - 0.3, Divisor(()), ball, resolution=8)


def test_pipeline_zero_free(ball, rng):
    rep = nevanlinna_pipeline(lambda z: np.ones(z.shape[:-1], complex), Divisor(()), ball,
                              resolution=8, rng=rng)
    assert rep.bounded and rep.ratio == 1.0
    assert np.allclose(rep.integrals_u, 0)


def test_tabulated_rudin_paths_agree(rng):
    from cr_henkin.studies import shipped_potential
    alpha = Form11.from_potential(shipped_potential())
    z = _pts(rng, 40, 0.35)
    a = alpha.rudin(z, use_numba=True)
    b = alpha.rudin(z, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)
    # the tabulated potential against direct Gauss-Legendre in t; the cutoff
    # transition needs ~1000 nodes before the direct rule settles
    direct = Form11.rudin(alpha, z, 1024)
    np.testing.assert_allclose(a, direct, atol=1e-9)


def test_mollified_exp_is_real_part(rng):
    z = _pts(rng, 8, 0.2)
    v = mollify_log_modulus(lambda x: np.exp(x[..., 0]), Mollifier(0.2), z)
    np.testing.assert_allclose(v, np.real(z[:, 0]), atol=1e-6)


def test_mollified_log_converges_off_zeros():
    h = lambda x: x[..., 0] - 0.3  # noqa: E731
    z = np.array([[0.0, 0.1], [0.5j, -0.2]])
    errs = [np.max(np.abs(mollify_log_modulus(h, Mollifier(e), z) - np.log(np.abs(h(z)))))
            for e in (0.4, 0.2, 0.1)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-9


def test_divisor_current_is_positive(ball, rng):
    from cr_henkin.lelong import mollified_current
    d = Divisor((line_patch(ball, (1, 0.5j), 0.2),))
    alpha = mollified_current(d, Mollifier(0.2))
    z = _pts(rng, 200, 0.3)
    assert alpha.is_positive(z, tol=1e-10)
    A = -1j * alpha(z)
    off = 2 * np.abs(A[:, 0, 1])
    assert np.all(off <= np.real(A[:, 0, 0] + A[:, 1, 1]) + 1e-12)


def _line_marginal(m, s):
    # int_C k_eps(sqrt(s^2 + |xi|^2)) dA(xi), straight from the radial kernel
    f = lambda r: m.radial(np.sqrt(s * s + r * r)) * 2 * np.pi * r  # noqa: E731
    return integrate.quad(f, 0, m.support, epsabs=0, epsrel=1e-12, limit=200)[0]


def test_current_matches_line_oracle(ball):
    # h = z1 - 0.3: d1 dbar1 log|h| = (pi/2) delta on the line, so the mollified
    # current is i (pi/2) times the kernel marginal at the distance to the line
    m = Mollifier(0.2)
    from cr_henkin.lelong import mollified_current
    alpha = mollified_current(Divisor((line_patch(ball, (1, 0), 0.3),)), m)
    z = np.array([[0.33, 0.1], [0.28 + 0.02j, -0.2j], [0.1, 0.2]])
    A = alpha(z)
    for i, s in enumerate(np.abs(z[:, 0] - 0.3)):
        expect = 1j * np.pi / 2 * _line_marginal(m, s) if s < m.support else 0.0
        assert A[i, 0, 0] == pytest.approx(expect, rel=1e-7, abs=1e-9)
    assert np.all(A[:, 1, :] == 0) and np.all(A[:, 0, 1] == 0)


@pytest.mark.parametrize("s", [0.0, 0.03, 0.07, 0.12])
def test_mollified_log_line_oracle(s):
    # the circle mean of log|s - r e^(it)| is log max(s, r)
    m = Mollifier(0.2)
    f = lambda r: m.marginal(r) * 2 * np.pi * r * np.log(max(s, r))  # noqa: E731
    exact = integrate.quad(f, 0, m.support, points=[s] if 0 < s < m.support else None,
                           epsabs=0, epsrel=1e-12, limit=400)[0]
    v = mollify_log_modulus(lambda x: x[..., 0] - 0.3, m, np.array([[0.3 + s, 0.1]]))
    assert abs(v[0] - exact) < 5e-3
