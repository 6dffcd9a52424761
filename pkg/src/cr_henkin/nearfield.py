"""Local quadrature for targets close to a level-set grid.

The base grid integrates smooth integrands spectrally but not kernels whose
singular point sits within a few node spacings of the surface.  For such a
target we pick a foot point z0 on the surface and split the integral with a
smooth cutoff chi(psi / a), psi the angle between the parameter direction
theta and theta0 (the direction of z0):

    I = sum_base f w  -  sum_base f w chi  +  sum_patch f w chi.

The patch parametrises the surface near z0 through the exponential map of
S^3 at theta0, composed with a linear map that makes the surface metric the
identity at z0.  In those coordinates w (a 3-vector) it uses polar
coordinates around the foot point: geometrically graded radial panels that
start at the target distance, and a cos/azimuth rule on S^2 whose pole is the
J nu direction, where the support function grows only linearly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_points, eval_rho, grad_rho, to_complex, to_real
from .grids import BoundaryGrid, _dir_deriv, _scale, form_factors, ray_roots


def cutoff(s, s0: float = 0.0) -> np.ndarray:
    """C-infinity step: 1 on [0, s0], 0 on [1, inf); flat to all orders at both ends."""
    s = np.asarray(s, dtype=float)
    u = np.clip((s - s0) / (1 - s0), 0.0, 1.0)

    def h(t):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)

    a, b = h(1 - u), h(u)
    return a / (a + b)


@dataclass(frozen=True)
class PatchRule:
    radial_nodes: int = 6
    radial_ratio: float = 2.5
    outer_panels: int = 6         # cap on panel width: rmax / outer_panels
    cos_edges: tuple = (-1.0, -0.6, -0.25, -0.08, -0.02, 0.0, 0.02, 0.08, 0.25, 0.6, 1.0)
    cos_nodes: int = 4
    azimuth: int = 24
    angle_factor: float = 6.0     # patch radius in units of the base angular step
    max_angle: float = 1.2
    max_aspect: float = 4.0       # refuse patches on strongly anisotropic metrics


@dataclass
class Patch:
    foot: np.ndarray
    theta0: np.ndarray
    angle: float
    nodes: np.ndarray        # (K, 2)
    grad: np.ndarray         # (K, 2) d rho at nodes
    form: np.ndarray         # (K, 2) chi-weighted form factors: int chi phi^omega = sum phi_j form_j
    area: np.ndarray         # (K,) chi-weighted surface weights
    base_idx: np.ndarray     # base nodes inside the cutoff support
    base_chi: np.ndarray     # chi at those nodes


def _sphere_frame(theta0):
    # orthonormal basis of the real tangent space of S^3 at theta0, shape (3, 4)
    t = to_real(theta0)
    M = np.linalg.qr(np.column_stack([t, np.eye(4)]))[0]
    return M[:, 1:4].T


def _surface_frame(nu):
    # (J nu, e_a, e_b): orthonormal frame of the tangent space at a point with normal nu
    n = to_complex(nu)
    jn = to_real(1j * n)
    M = np.linalg.qr(np.column_stack([nu, jn, np.eye(4)]))[0]
    # the QR columns may flip sign; keep jn itself as the first axis
    return np.stack([jn, M[:, 2], M[:, 3]])


def _tangents(domain, c, S, theta0, E, R, v, g, theta):
    """d zeta / d v_k (complex, shape (K, 3, 2)) for zeta(v) = c + R S exp_theta0(v)."""
    vn = np.linalg.norm(v, axis=1)
    small = vn < 1e-12
    vh = np.where(small[:, None], 0.0, v / np.where(small, 1.0, vn)[:, None])
    sinc = np.where(small, 1.0, np.sin(vn) / np.where(small, 1.0, vn))
    t0 = to_real(theta0)
    vh_vec = vh @ E                                   # (K, 4)
    out = []
    d = theta * S
    D0 = _dir_deriv(g, d)
    for k in range(3):
        ek = E[k]
        proj = vh[:, k]
        dtheta = (-np.sin(vn) * proj)[:, None] * t0 + (np.cos(vn) * proj)[:, None] * vh_vec \
            + sinc[:, None] * (ek[None, :] - proj[:, None] * vh_vec)
        du = to_complex(dtheta) * S
        Ru = -R * _dir_deriv(g, du) / D0
        out.append(Ru[:, None] * d + R[:, None] * du)
    return np.stack(out, axis=1)


def _theta_of(theta0, E, v):
    vn = np.linalg.norm(v, axis=1)
    small = vn < 1e-12
    vh = np.where(small[:, None], 0.0, v / np.where(small, 1.0, vn)[:, None])
    t = np.cos(vn)[:, None] * to_real(theta0) + np.sin(vn)[:, None] * (vh @ E)
    return to_complex(t)


class NearField:
    """Builds and caches nothing; one instance per (domain, grid)."""

    def __init__(self, domain, grid: BoundaryGrid, rule: PatchRule = PatchRule()):
        self.domain = domain
        self.grid = grid
        self.rule = rule
        self.S = _scale(domain)
        self.c = grid.center
        self.angle = min(rule.max_angle, rule.angle_factor * np.pi / grid.resolution)
        self.tree = cKDTree(to_real(grid.theta))
        # S^2 rule with pole on the first axis
        ce, cw = [], []
        x, w = np.polynomial.legendre.leggauss(rule.cos_nodes)
        for a, b in zip(rule.cos_edges[:-1], rule.cos_edges[1:]):
            ce.append(a + (b - a) * (x + 1) / 2)
            cw.append(w * (b - a) / 2)
        ce, cw = np.concatenate(ce), np.concatenate(cw)
        ph = 2 * np.pi * (np.arange(rule.azimuth) + 0.5) / rule.azimuth
        C, P = np.meshgrid(ce, ph, indexing="ij")
        sn = np.sqrt(1 - C**2)
        self.dirs = np.stack([C, sn * np.cos(P), sn * np.sin(P)], axis=-1).reshape(-1, 3)
        self.dir_w = (cw[:, None] * np.full(rule.azimuth, 2 * np.pi / rule.azimuth)).ravel()
        self.gl = np.polynomial.legendre.leggauss(rule.radial_nodes)

    def _radial_edges(self, r_in, rm):
        # geometric panels out of the singular scale, uniform once they reach rm / outer
        cap = rm / self.rule.outer_panels
        edges = [0.0]
        r = min(r_in, cap)
        while r < rm * (1 - 1e-12):
            edges.append(r)
            r = min(r * self.rule.radial_ratio, r + cap)
        edges.append(rm)
        return np.array(edges)

    # ------------------------------------------------------------------
    def theta_of_point(self, z0):
        v = (as_points(z0) - self.c) / self.S
        return v / np.linalg.norm(v)

    def foot_point(self, x, iters: int = 30):
        """Closest point on the grid's level set (alternating normal projection)."""
        x = as_points(x)
        level = -self.grid.level
        th = self.theta_of_point(x) if np.linalg.norm(x - self.c) > 1e-14 else self.grid.theta[0]
        d = th * self.S
        z = self.c + ray_roots(self.domain, self.c, d[None, :], level)[0] * d
        for _ in range(iters):
            g = grad_rho(self.domain, z)
            nu = to_real(np.conj(g)) * 2
            nu = to_complex(nu / np.linalg.norm(nu))
            # along the line x + t nu, find the crossing closest to x
            t = 0.0
            for _ in range(30):
                p = x + t * nu
                val = eval_rho(self.domain, p) - level
                der = _dir_deriv(grad_rho(self.domain, p), nu)
                step = val / der
                t -= step
                if abs(step) < 1e-15 * max(1.0, abs(t)):
                    break
            znew = x + t * nu
            if np.linalg.norm(znew - z) < 1e-13:
                z = znew
                break
            z = znew
        return z, float(np.linalg.norm(x - z))

    def base_neighbours(self, theta0, angle):
        chord = 2 * np.sin(angle / 2)
        idx = np.array(sorted(self.tree.query_ball_point(to_real(theta0), chord)), dtype=int)
        if len(idx) == 0:
            return idx, np.zeros(0)
        cosang = np.clip(np.real(np.sum(self.grid.theta[idx] * np.conj(theta0), axis=-1)), -1, 1)
        return idx, cutoff(np.arccos(cosang) / angle)

    def build(self, z0, dist: float) -> Optional[Patch]:
        """Patch around foot point ``z0`` for targets at distance about ``dist``.

        Returns None when the surface metric at z0 is too anisotropic for the
        polar rule (the caller then relies on the base grid alone).
        """
        dom, S, c = self.domain, self.S, self.c
        z0 = as_points(z0)
        theta0 = self.theta_of_point(z0)
        R0 = float(np.linalg.norm((z0 - c) / S))
        E = _sphere_frame(theta0)
        g0 = grad_rho(dom, z0)
        nu0 = to_real(np.conj(g0))
        nu0 = nu0 / np.linalg.norm(nu0)
        T0 = to_real(_tangents(dom, c, S, theta0, E, np.array([R0]), np.zeros((1, 3)),
                               g0[None, :], theta0[None, :])[0])      # (3, 4)
        D0 = _surface_frame(nu0) @ T0.T                              # w = D0 v
        sv = np.linalg.svd(D0, compute_uv=False)
        if sv[0] > self.rule.max_aspect * sv[-1]:
            return None
        Dinv = np.linalg.inv(D0)
        a = self.angle

        # polar rule in w around the foot
        s = self.dirs
        rmax = a / np.linalg.norm(s @ Dinv.T, axis=1)                # per direction
        r_in = max(0.25 * dist, 1e-6 * float(rmax.max()))
        xg, wg = self.gl
        rs, ws, ds = [], [], []
        for j in range(len(s)):
            rm = rmax[j]
            edges = self._radial_edges(r_in, rm)
            lo, hi = edges[:-1, None], edges[1:, None]
            rr = (lo + (hi - lo) * (xg + 1) / 2).ravel()
            rw = ((hi - lo) * wg / 2).ravel()
            rs.append(rr)
            ws.append(rw * rr**2 * self.dir_w[j])
            ds.append(np.full(len(rr), j))
        r = np.concatenate(rs)
        W = np.concatenate(ws)
        wv = r[:, None] * s[np.concatenate(ds)]
        v = wv @ Dinv.T
        vn = np.linalg.norm(v, axis=1)
        chi = cutoff(vn / a)
        keep = chi > 0
        v, W, chi = v[keep], W[keep], chi[keep]

        theta = _theta_of(theta0, E, v)
        d = theta * S
        R = ray_roots(dom, c, d, -self.grid.level, r0=R0)
        nodes = c + R[:, None] * d
        g = grad_rho(dom, nodes)
        Tv = _tangents(dom, c, S, theta0, E, R, v, g, theta)          # d/dv
        Tw = np.einsum("kjc,jm->kmc", Tv, Dinv)                      # d/dw
        Tr = to_real(Tw)
        area_el = np.sqrt(np.abs(np.linalg.det(np.einsum("nik,njk->nij", Tr, Tr))))
        gr = to_real(np.conj(g))
        nu = gr / np.linalg.norm(gr, axis=-1, keepdims=True)
        orient = np.sign(np.linalg.det(np.concatenate([nu[:, None, :], Tr], axis=1)))
        ff = form_factors(Tw, orient)
        Wc = W * chi
        idx, bchi = self.base_neighbours(theta0, a)
        return Patch(z0, theta0, a, nodes, g, ff * Wc[:, None], area_el * Wc, idx, bchi)
