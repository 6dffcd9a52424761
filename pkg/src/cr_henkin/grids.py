"""Quadrature grids on level sets {rho = -eps} and on the domain.

Both grids are star-shaped parametrisations around an interior centre c:
points c + R(theta) S theta, with theta on the unit sphere S^3 in Hopf
coordinates theta = (cos eta e^{i xi1}, sin eta e^{i xi2}) and S the
domain's diagonal ``grid_scale``.  eta carries a Gauss-Legendre rule, the two
angles the periodic trapezoid rule, so smooth integrands converge spectrally.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GeometryError, OutOfChartError, ResolutionError
from .geometry import ModelDomain, as_points, eval_rho, grad_rho, to_real


# ------------------------------------------------------------------- S^3 rule

@dataclass(frozen=True)
class SphereRule:
    theta: np.ndarray        # (N, 2) complex unit vectors
    d_eta: np.ndarray        # (N, 2) d theta / d eta
    d_xi1: np.ndarray
    d_xi2: np.ndarray
    wp: np.ndarray           # parameter weights w_eta * w_xi * w_xi
    dS: np.ndarray           # surface weights on S^3 (wp * sin cos)
    steps: np.ndarray        # (N, 3) local parameter steps
    shape: tuple


def s3_rule(n: int) -> SphereRule:
    """n Gauss nodes in eta, 2n trapezoid nodes in each Hopf angle."""
    x, w = np.polynomial.legendre.leggauss(n)
    eta = (x + 1) * np.pi / 4
    w_eta = w * np.pi / 4
    m = 2 * n
    xi = 2 * np.pi * (np.arange(m) + 0.5) / m
    w_xi = 2 * np.pi / m
    E, X1, X2 = np.meshgrid(eta, xi, xi, indexing="ij")
    c, s = np.cos(E), np.sin(E)
    e1, e2 = np.exp(1j * X1), np.exp(1j * X2)
    theta = np.stack([c * e1, s * e2], axis=-1)
    d_eta = np.stack([-s * e1, c * e2], axis=-1)
    d_xi1 = np.stack([1j * c * e1, 0 * e2], axis=-1)
    d_xi2 = np.stack([0 * e1, 1j * s * e2], axis=-1)
    wp = (w_eta[:, None, None] * w_xi * w_xi) * np.ones_like(E)
    gaps = np.gradient(eta) if n > 1 else np.array([np.pi / 2])
    steps = np.stack([np.broadcast_to(gaps[:, None, None], E.shape),
                      np.full(E.shape, w_xi), np.full(E.shape, w_xi)], axis=-1)
    flat = lambda a: a.reshape(-1, *a.shape[3:])  # noqa: E731
    return SphereRule(flat(theta), flat(d_eta), flat(d_xi1), flat(d_xi2),
                      wp.ravel(), (wp * c * s).ravel(), flat(steps), (n, m, m))


# ------------------------------------------------------------ ray root finding

def _safe_rho(domain, z):
    try:
        return eval_rho(domain, z)
    except OutOfChartError:
        # evaluate pointwise so that bracketing can shrink past the chart edge
        out = np.empty(z.shape[:-1])
        flat_z, flat_o = z.reshape(-1, 2), out.reshape(-1)
        for i, p in enumerate(flat_z):
            try:
                flat_o[i] = eval_rho(domain, p)
            except OutOfChartError:
                flat_o[i] = np.inf
        return out


def _dir_deriv(g, v):
    # real derivative of rho along the complex direction v
    return 2 * np.real(np.sum(g * v, axis=-1))


def _newton_warm(domain, centers, dirs, level, r0, tol, iters=12):
    # plain Newton from a nearby guess; returns (r, converged mask)
    r = np.array(r0, dtype=float)
    ok = np.zeros(len(r), bool)
    for _ in range(iters):
        z = centers + r[:, None] * dirs
        try:
            val = eval_rho(domain, z) - level
            der = _dir_deriv(grad_rho(domain, z), dirs)
        except OutOfChartError:
            return r, ok
        with np.errstate(divide="ignore", invalid="ignore"):
            step = val / der
        good = np.isfinite(step) & (der > 0)
        rn = np.where(good, r - step, r)
        ok = good & (np.abs(rn - r) <= tol * np.maximum(np.abs(rn), 1e-300)) & (rn > 0)
        r = rn
        if ok.all():
            break
    return r, ok


def ray_roots(domain: ModelDomain, centers, dirs, level: float, r_hint: Optional[float] = None,
              tol: float = 1e-14, max_iter: int = 200, r0=None) -> np.ndarray:
    """Smallest r > 0 with rho(c + r d) = level, for every (c, d) pair.

    Bisection-safeguarded Newton; rho is convex so the root is unique once
    rho(c) < level.  With a warm start ``r0`` plain Newton is tried first and
    only the stragglers go through bracketing.
    """
    centers = np.broadcast_to(as_points(centers), np.broadcast_shapes(
        np.shape(centers), np.shape(dirs))).reshape(-1, 2)
    dirs = np.broadcast_to(as_points(dirs), centers.shape[:-1] + (2,)).reshape(-1, 2)
    if r0 is not None:
        r, ok = _newton_warm(domain, centers, dirs, level,
                             np.broadcast_to(r0, (len(dirs),)), 1e-13)
        if ok.all():
            return r
        if ok.any():
            rest = ~ok
            r[rest] = ray_roots(domain, centers[rest], dirs[rest], level, r_hint, tol, max_iter)
            return r
    rho_c = _safe_rho(domain, centers)
    if np.any(rho_c >= level):
        raise GeometryError("level set is empty or the centre is not inside it")
    lo = np.zeros(len(dirs))
    hi = np.full(len(dirs), r_hint if r_hint else domain.diameter)
    for _ in range(80):
        below = _safe_rho(domain, centers + hi[:, None] * dirs) < level
        if not below.any():
            break
        lo = np.where(below, hi, lo)
        hi = np.where(below, 2 * hi, hi)
    else:
        raise ResolutionError("could not bracket the level set along some rays")

    r = 0.5 * (lo + hi)
    done = np.zeros(len(r), bool)
    for _ in range(max_iter):
        z = centers + r[:, None] * dirs
        val = _safe_rho(domain, z) - level
        lo = np.where(val < 0, r, lo)
        hi = np.where(val >= 0, r, hi)
        fin = np.isfinite(val)
        der = np.zeros_like(r)
        if fin.any():
            der[fin] = _dir_deriv(grad_rho(domain, z[fin]), dirs[fin])
        with np.errstate(divide="ignore", invalid="ignore"):
            rn = r - val / der
        bad = ~np.isfinite(rn) | (rn <= lo) | (rn >= hi)
        rn = np.where(bad, 0.5 * (lo + hi), rn)
        done = np.abs(rn - r) <= tol * np.maximum(rn, 1e-300)
        r = rn
        if done.all():
            break
    else:
        raise ResolutionError("ray root finding did not converge")
    return r


# -------------------------------------------------------------------- grids

@dataclass(frozen=True)
class BoundaryGrid:
    """Nodes on {rho = -level} with surface weights and form factors.

    ``form_jacobians[:, j]`` converts phi_1 dzb1 ^ dz1 ^ dz2 (j = 0) and
    phi_2 dzb2 ^ dz1 ^ dz2 (j = 1) to densities against ``weights``:
    int phi ^ omega = sum_i w_i (phi_1 J_i0 + phi_2 J_i1).
    """

    level: float
    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    form_jacobians: np.ndarray
    resolution: int
    tangents: np.ndarray = field(repr=False)     # (N, 3, 4) parameter tangents
    local_spacing: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    center: np.ndarray = field(repr=False)
    domain_name: str = ""

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def spacing(self) -> float:
        return float(self.local_spacing.max())

    @property
    def complex_normals(self) -> np.ndarray:
        nu = self.normals
        return np.stack([nu[:, 0] + 1j * nu[:, 1], nu[:, 2] + 1j * nu[:, 3]], axis=-1)


@dataclass(frozen=True)
class VolumeGrid:
    nodes: np.ndarray
    weights: np.ndarray
    resolution: int
    center: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def volume(self) -> float:
        return float(self.weights.sum())


def _scale(domain):
    return np.asarray(domain.grid_scale, dtype=float)


def _default_center(domain):
    return np.asarray(domain.anchor, dtype=complex)


def _det3(a, b, c):
    return (a[:, 0] * (b[:, 1] * c[:, 2] - b[:, 2] * c[:, 1])
            - a[:, 1] * (b[:, 0] * c[:, 2] - b[:, 2] * c[:, 0])
            + a[:, 2] * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0]))


def form_factors(tangents_c: np.ndarray, sign: np.ndarray) -> np.ndarray:
    """dzb_j ^ dz1 ^ dz2 on the three tangent columns (complex (N,3,2) input)."""
    t = tangents_c
    z1 = t[:, :, 0]
    z2 = t[:, :, 1]
    j1 = _det3(np.conj(z1), z1, z2)
    j2 = _det3(np.conj(z2), z1, z2)
    return sign[:, None] * np.stack([j1, j2], axis=-1)


def build_boundary_grid(domain: ModelDomain, eps: float = 0.0, resolution: int = 16,
                        center=None) -> BoundaryGrid:
    """Grid on the level set {rho = -eps} (eps < 0: outer level {rho = |eps|})."""
    if resolution < 8:
        raise ResolutionError("resolution must be at least 8")
    c = _default_center(domain) if center is None else as_points(center)
    S = _scale(domain)
    rule = s3_rule(resolution)
    d = rule.theta * S
    R = ray_roots(domain, c, d, -eps)
    nodes = c + R[:, None] * d
    g = grad_rho(domain, nodes)
    D0 = _dir_deriv(g, d)
    tang_c = []
    for dv, st in ((rule.d_eta, 0), (rule.d_xi1, 1), (rule.d_xi2, 2)):
        du = dv * S
        Ru = -R * _dir_deriv(g, du) / D0
        tang_c.append(Ru[:, None] * d + R[:, None] * du)
    tang_c = np.stack(tang_c, axis=1)                     # (N, 3, 2)
    T = to_real(tang_c)                                   # (N, 3, 4)
    gram = np.einsum("nik,njk->nij", T, T)
    area_el = np.sqrt(np.linalg.det(gram))
    weights = rule.wp * area_el

    gr = to_real(g) * np.array([2, -2, 2, -2])
    nu = gr / np.linalg.norm(gr, axis=-1, keepdims=True)
    orient = np.sign(np.linalg.det(np.concatenate([nu[:, None, :], T], axis=1)))
    jac = form_factors(tang_c, orient) / area_el[:, None]

    lens = np.linalg.norm(T, axis=-1) * rule.steps
    return BoundaryGrid(float(eps), nodes, weights, nu, jac, resolution, T,
                        lens.max(axis=1), rule.theta, c, domain.name)


def build_volume_grid(domain: ModelDomain, resolution: int = 8, center=None,
                      radial: Optional[int] = None) -> VolumeGrid:
    """Polar grid c + x R(theta) S theta, x Gauss-Legendre on (0, 1).

    Every node is strictly inside because x < 1 and the domain is convex.
    """
    if resolution < 8:
        raise ResolutionError("resolution must be at least 8")
    c = _default_center(domain) if center is None else as_points(center)
    nodes, weights = _polar_nodes(domain, c[None, :], resolution, radial or resolution)
    return VolumeGrid(nodes[0], weights[0], resolution, c)


def _polar_nodes(domain, centers, resolution, radial, level=0.0, scale=None):
    """Batched centred polar grids: nodes (M, Nd*nr, 2), weights (M, Nd*nr)."""
    S = _scale(domain) if scale is None else np.asarray(scale, dtype=float)
    rule = s3_rule(resolution)
    d = rule.theta * S
    M = len(centers)
    R = ray_roots(domain, np.repeat(centers, len(d), axis=0), np.tile(d, (M, 1)),
                  -level).reshape(M, -1)
    x, wx = np.polynomial.legendre.leggauss(radial)
    x, wx = (x + 1) / 2, wx / 2
    r = R[:, :, None] * x                                    # (M, Nd, nr)
    nodes = centers[:, None, None, :] + r[..., None] * d[None, :, None, :]
    jac = np.prod(S) ** 2
    weights = (rule.dS[None, :, None] * wx * x**3 * R[:, :, None] ** 4) * jac
    return nodes.reshape(M, -1, 2), weights.reshape(M, -1)


def export_grid_csv(grid: BoundaryGrid, path) -> None:
    """Columns x1,y1,x2,y2,weight,nu1..nu4,jac_re,jac_im (jac: the dzb1 factor)."""
    x = to_real(grid.nodes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "y1", "x2", "y2", "weight", "nu1", "nu2", "nu3", "nu4",
                    "jac_re", "jac_im"])
        for i in range(grid.size):
            row = list(x[i]) + [grid.weights[i]] + list(grid.normals[i]) + [
                grid.form_jacobians[i, 0].real, grid.form_jacobians[i, 0].imag]
            w.writerow([repr(float(v)) for v in row])
