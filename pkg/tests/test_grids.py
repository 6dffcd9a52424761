import numpy as np
import pytest
from scipy import integrate
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cr_henkin.errors import CRError
from cr_henkin.geometry import eval_rho, make_domain, to_complex, to_real
from cr_henkin.grids import build_boundary_grid, build_volume_grid, export_grid_csv, ray_roots, s3_rule
from cr_henkin.nearfield import NearField, PatchRule, cutoff


@pytest.mark.parametrize("n", [8, 12, 16])
def test_s3_rule_area(n):
    rule = s3_rule(n)
    assert rule.dS.sum() == pytest.approx(2 * np.pi**2, rel=1e-12)


@pytest.mark.parametrize("n", [8, 12])
def test_ball_measures(ball, n):
    G = build_boundary_grid(ball, resolution=n)
    V = build_volume_grid(ball, resolution=n)
    assert G.area == pytest.approx(2 * np.pi**2, rel=1e-12)
    assert V.volume == pytest.approx(np.pi**2 / 2, rel=1e-12)
    assert np.max(np.abs(eval_rho(ball, G.nodes))) < 1e-12


@pytest.mark.parametrize("eps", [0.1, 0.3])
def test_level_set_grid(ball, eps):
    # {|z|^2 = 1 - eps}: sphere of radius sqrt(1 - eps)
    G = build_boundary_grid(ball, eps=eps, resolution=8)
    assert G.area == pytest.approx(2 * np.pi**2 * (1 - eps) ** 1.5, rel=1e-12)


def test_dalpha_grid_on_surface(dalpha):
    G = build_boundary_grid(dalpha, resolution=16)
    assert np.max(np.abs(eval_rho(dalpha, G.nodes))) < 1e-10
    G2 = build_boundary_grid(dalpha, resolution=24)
    # the surface is smooth: area converges quickly
    assert G.area == pytest.approx(G2.area, rel=1e-3)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (4, 4), elements=st.floats(-1, 1)), st.floats(0.0, 0.8))
def test_ray_roots_land_on_level(d, level):
    dom = make_domain("om1", alpha1=0.5, alpha2=0.5)
    norms = np.linalg.norm(d, axis=1)
    if np.any(norms < 1e-3):
        return
    dirs = to_complex(d / norms[:, None])
    c = dom.p - np.array([0.5, 0])          # inside
    if eval_rho(dom, c[None])[0] >= -level:
        return
    r = ray_roots(dom, c, dirs, -level)
    np.testing.assert_allclose(eval_rho(dom, c + r[:, None] * dirs), -level, atol=1e-9)


def test_export_grid_csv(tmp_path, ball_grid8):
    export_grid_csv(ball_grid8, tmp_path / "g.csv")
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert len(rows) == ball_grid8.size + 1


@settings(max_examples=30)
@given(st.floats(0, 1), st.floats(0, 1))
def test_cutoff_monotone(a, b):
    lo, hi = sorted((a, b))
    assert cutoff(lo) >= cutoff(hi)
    assert cutoff(0.0) == 1.0 and cutoff(1.0) == 0.0


@pytest.mark.parametrize("rule,tol", [(PatchRule(radial_nodes=4, cos_nodes=3, azimuth=16), 1e-5),
                                      (PatchRule(), 5e-7)])
def test_patch_area_oracle(ball, ball_grid8, rule, tol):
    # on S^3 the chi-weighted area around any foot is 4 pi int_0^a chi(psi / a) sin^2 psi dpsi
    nf = NearField(ball, ball_grid8, rule)
    z = np.array([0.6, 0.79j])
    P = nf.build(z, 1 - np.linalg.norm(z))
    a = nf.angle
    exact = 4 * np.pi * integrate.quad(lambda s: cutoff(s / a) * np.sin(s) ** 2, 0, a,
                                       epsabs=0, epsrel=1e-13)[0]
    assert abs(P.area.sum() - exact) < tol
    assert np.max(np.abs(eval_rho(ball, P.nodes))) < 1e-10


def test_patch_refused_on_anisotropic_surface(dalpha):
    G = build_boundary_grid(dalpha, resolution=16)
    nf = NearField(dalpha, G)
    z0 = G.nodes[0] * 0.999
    assert nf.build(z0, 1e-3) is None
