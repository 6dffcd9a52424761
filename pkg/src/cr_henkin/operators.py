"""Henkin solution of dbar u = phi and the Shaw solution of dbar_b u = phi.

Conventions.  Points are complex arrays (..., 2).  A (0,1)-form is phi_1 dzb1
+ phi_2 dzb2; its boundary integrals are sums  sum_i q_i  with charges
q_i = w_i (phi_1 J_i0 + phi_2 J_i1)  (see ``BoundaryGrid``).

    H phi(z)  = c_H sum_i q_i H(zeta_i, z)
    K phi(z)  = -(1/pi^2) int_Omega sum_j phi_j (conj zeta_j - conj z_j) / |zeta - z|^4 dV
    T phi     = H phi + K phi                    (interior)
    T_b phi   = H+ phi - H- phi                  (boundary, at regularisation eps)

``c_H = ORIENTATION / (4 pi^2)``; the sign fixes the orientation of the
boundary relative to omega(zeta) = dzeta_1 ^ dzeta_2 and is pinned by the
identity T(dzb_j) = conj(z_j).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _hot
from ._accel import USE_NUMBA
from .errors import DataError, GeometryError, PreconditionError, ResolutionError
from .geometry import (ModelDomain, Setting, as_points, complex_normal, eval_rho, grad_rho,
                       outward_normal, to_complex, to_real)
from .grids import BoundaryGrid, VolumeGrid, _polar_nodes, ray_roots, s3_rule
from .nearfield import NearField, PatchRule

ORIENTATION = -1.0
C_H = ORIENTATION / (4 * np.pi**2)


# ------------------------------------------------------------------ forms

@dataclass(frozen=True)
class Form01:
    """phi = c1 dzb1 + c2 dzb2 with vectorised coefficient callables."""

    c1: Callable
    c2: Callable
    name: str = ""
    both: Optional[Callable] = field(default=None, compare=False)   # z -> (..., 2) in one pass

    def __call__(self, z) -> np.ndarray:
        z = as_points(z)
        if self.both is not None:
            return np.broadcast_to(np.asarray(self.both(z), dtype=complex), z.shape)
        a = np.broadcast_to(np.asarray(self.c1(z), dtype=complex), z.shape[:-1])
        b = np.broadcast_to(np.asarray(self.c2(z), dtype=complex), z.shape[:-1])
        return np.stack([a, b], axis=-1)

    @staticmethod
    def zero() -> "Form01":
        zero = lambda z: np.zeros(np.shape(z)[:-1], dtype=complex)  # noqa: E731
        return Form01(zero, zero, "0")

    def __add__(self, other: "Form01") -> "Form01":
        return Form01(lambda z: self.c1(z) + other.c1(z), lambda z: self.c2(z) + other.c2(z),
                      f"({self.name})+({other.name})")

    def scale(self, a: complex) -> "Form01":
        return Form01(lambda z: a * self.c1(z), lambda z: a * self.c2(z), f"{a}*({self.name})",
                      None if self.both is None else (lambda z: a * self.both(z)))

    def closedness_residual(self, points, h: float = 1e-4) -> float:
        """max |d phi_1/d zb_2 - d phi_2/d zb_1| by central differences."""
        pts = np.atleast_2d(as_points(points))
        d12 = _fd_dbar(self.c1, pts, 1, h)
        d21 = _fd_dbar(self.c2, pts, 0, h)
        return float(np.max(np.abs(d12 - d21)))

    def check_closed(self, points, tol: float = 1e-6, h: float = 1e-4) -> None:
        res = self.closedness_residual(points, h)
        scale = 1.0 + float(np.max(np.abs(self(points))))
        if res > tol * scale:
            raise DataError(f"form is not dbar-closed (residual {res:.3g})")


def _fd_dbar(f, pts, j, h):
    # d f / d zb_j = (f_x + i f_y) / 2, central differences
    e = np.zeros(2, dtype=complex)
    e[j] = h
    fx = (f(pts + e) - f(pts - e)) / (2 * h)
    fy = (f(pts + 1j * e) - f(pts - 1j * e)) / (2 * h)
    return 0.5 * (fx + 1j * fy)


def dbar_of(g_dzb1: Callable, g_dzb2: Callable, name: str = "") -> Form01:
    """Form01 from the two dbar-derivatives of a function (an exact form)."""
    return Form01(g_dzb1, g_dzb2, name)


DZB1 = Form01(lambda z: np.ones(np.shape(z)[:-1], complex),
              lambda z: np.zeros(np.shape(z)[:-1], complex), "dzb1")
# dbar(conj z1 conj z2) = conj z2 dzb1 + conj z1 dzb2
DZB1ZB2 = Form01(lambda z: np.conj(as_points(z)[..., 1]),
                 lambda z: np.conj(as_points(z)[..., 0]), "dbar(zb1 zb2)")


@dataclass(frozen=True)
class PolyFunction:
    """g = sum c z1^a z2^b zb1^c zb2^d, with exponents rows (a, b, c, d)."""

    exps: np.ndarray
    coefs: np.ndarray

    def __call__(self, z):
        z = as_points(z)
        out = np.zeros(z.shape[:-1], dtype=complex)
        if len(self.exps) == 0:
            return out
        top = int(np.max(self.exps))
        # power tables pw[v][k] = var_v^k, shared by all terms
        pw = []
        for v in (z[..., 0], z[..., 1], np.conj(z[..., 0]), np.conj(z[..., 1])):
            t = [np.ones_like(v)]
            for _ in range(top):
                t.append(t[-1] * v)
            pw.append(t)
        for (a, b, c, d), k in zip(self.exps, self.coefs):
            out += k * (pw[0][a] * pw[1][b]) * (pw[2][c] * pw[3][d])
        return out

    def dz(self, j: int) -> "PolyFunction":
        return self._diff(j)

    def dzb(self, j: int) -> "PolyFunction":
        return self._diff(2 + j)

    def _diff(self, col: int) -> "PolyFunction":
        keep = self.exps[:, col] > 0
        e = self.exps[keep].copy()
        c = self.coefs[keep] * e[:, col]
        e[:, col] -= 1
        return PolyFunction(e, c)

    def dbar(self) -> Form01:
        a, b = self.dzb(0), self.dzb(1)
        return Form01(a, b, "dbar g")


def random_exact_form(rng: np.random.Generator, degree: int = 3) -> tuple:
    """(g, dbar g) for a random polynomial g in z, zb of total degree <= degree."""
    exps = np.array([e for e in np.ndindex(*(degree + 1,) * 4) if sum(e) <= degree
                     and e[2] + e[3] > 0])
    n = len(exps)
    coefs = (rng.normal(size=n) + 1j * rng.normal(size=n)) / np.sqrt(2 * n)
    g = PolyFunction(exps, coefs)
    return g, g.dbar()


class PolyFormBasis:
    """The forms m(z) dzb_j, m running over monomials in z, zb of degree <= ``degree``.

    ``stack(z)`` evaluates all of them at once, shape (R, ..., 2); operators are
    linear, so a polynomial form is handled through ``coefficients``.
    """

    def __init__(self, degree: int = 2):
        self.degree = degree
        self.exps = np.array([e for e in np.ndindex(*(degree + 1,) * 4) if sum(e) <= degree])
        self.size = 2 * len(self.exps)

    def __len__(self):
        return self.size

    def stack(self, z) -> np.ndarray:
        z = as_points(z)
        pw = []
        for v in (z[..., 0], z[..., 1], np.conj(z[..., 0]), np.conj(z[..., 1])):
            t = [np.ones_like(v)]
            for _ in range(self.degree):
                t.append(t[-1] * v)
            pw.append(t)
        mons = np.stack([(pw[0][a] * pw[1][b]) * (pw[2][c] * pw[3][d]) for a, b, c, d in self.exps])
        out = np.zeros((self.size,) + z.shape, dtype=complex)
        n = len(self.exps)
        out[:n, ..., 0] = mons
        out[n:, ..., 1] = mons
        return out

    def coefficients(self, phi: Form01) -> np.ndarray:
        """c with phi = sum_r c_r basis_r (both components must be PolyFunctions)."""
        index = {tuple(e): i for i, e in enumerate(self.exps)}
        c = np.zeros(self.size, dtype=complex)
        for j, comp in enumerate((phi.c1, phi.c2)):
            if not isinstance(comp, PolyFunction):
                raise PreconditionError("basis coefficients need polynomial components")
            for e, k in zip(comp.exps, comp.coefs):
                i = index.get(tuple(int(v) for v in e))
                if i is None:
                    raise PreconditionError("form degree exceeds the basis degree")
                c[j * len(self.exps) + i] += k
        return c


# ---------------------------------------------------------------- solutions

class Provenance(str, Enum):
    HENKIN_INTERIOR = "HenkinInterior"
    SHAW_BOUNDARY = "ShawBoundary"
    PL_POTENTIAL = "PL-potential"


@dataclass
class SolutionField:
    evaluator: Callable
    provenance: Provenance
    epsilon: float = 0.0
    domain: Optional[ModelDomain] = field(default=None, repr=False)

    def __call__(self, z):
        return self.evaluator(z)


# --------------------------------------------------------- boundary sums

@dataclass
class _Group:
    idx: np.ndarray
    patch: object   # Patch or None


class BoundaryOperator:
    """Kernel sums over one boundary grid, with local correction near the surface.

    Targets within ``near_factor`` nearest-neighbour spacings of the grid get
    a patch from ``NearField`` (shared by targets within a quarter of their
    distance).  Where the surface metric is too anisotropic for a patch the
    base grid is used alone and the target must be at least one spacing away.
    """

    def __init__(self, domain: ModelDomain, grid: BoundaryGrid, near: bool = True,
                 rule: PatchRule = PatchRule(), near_factor: float = 2.0,
                 use_numba: bool = USE_NUMBA):
        self.domain, self.grid = domain, grid
        self.use_numba = use_numba
        self.near_factor = near_factor
        self.g = grad_rho(domain, grid.nodes)
        self.tree = cKDTree(to_real(grid.nodes))
        dnn, _ = self.tree.query(to_real(grid.nodes), k=2)
        self.nn = dnn[:, 1]
        self.nf = NearField(domain, grid, rule) if near else None
        self.floor = 1e-3 * domain.diameter
        self._plans: dict = {}
        self._patches: dict = {}

    def cached_plan(self, x) -> list:
        """``plan`` memoised on the target coordinates (the last few target sets)."""
        x = np.ascontiguousarray(np.atleast_2d(as_points(x)))
        key = hashlib.sha1(x.tobytes()).hexdigest()
        g = self._plans.get(key)
        if g is None:
            if len(self._plans) >= 2:       # patch sets are large
                self._plans.pop(next(iter(self._plans)))
            g = self._plans[key] = self.plan(x)
        return g

    def charges(self, phi: Form01, nodes=None, form=None) -> np.ndarray:
        nodes = self.grid.nodes if nodes is None else nodes
        v = phi(nodes)
        if form is None:
            form = self.grid.weights[:, None] * self.grid.form_jacobians
        return np.sum(v * form, axis=-1)

    def plan(self, x) -> list:
        """Group targets and build the patches they need.

        Targets are visited closest first.  A patch built for a target at
        distance d from foot point z0 also serves every later target on the
        same side whose offset from z0 has normal depth >= 0.75 d and lateral
        part <= 0.25 d (stacked level sets, FD stencils).
        """
        x = np.atleast_2d(as_points(x))
        X = to_real(x)
        dn, inn = self.tree.query(X)
        s = self.nn[inn]
        near = dn < self.near_factor * self.grid.local_spacing[inn]
        groups = []
        assigned = ~near
        memo, fresh = self._patches, {}
        for i in np.flatnonzero(near)[np.argsort(dn[near], kind="stable")]:
            if assigned[i]:
                continue
            patch, d = None, dn[i]
            if self.nf is not None:
                foot, d = self.nf.foot_point(x[i])
                # H+ and H- at the same eps share feet and distances
                key = (tuple(np.round(to_real(foot), 11)), round(d, 12))
                patch = memo.get(key, False)
                if patch is False:
                    patch = self.nf.build(foot, d)
                fresh[key] = patch
            if patch is None:
                if dn[i] < s[i]:
                    raise ResolutionError(f"target within one grid spacing of the surface "
                                          f"({dn[i]:.3g} < {s[i]:.3g})")
                assigned[i] = True
                continue
            if d < self.floor:
                raise ResolutionError(f"target distance {d:.3g} below the resolution floor")
            nu = to_real(np.conj(grad_rho(self.domain, foot)))
            nu /= np.linalg.norm(nu)
            rel = X - to_real(foot)
            depth = rel @ nu
            lat = np.linalg.norm(rel - depth[:, None] * nu, axis=1)
            side = np.sign(depth[i]) if depth[i] != 0 else -1.0
            mem = np.flatnonzero(~assigned & (side * depth >= 0.75 * d) & (lat <= 0.25 * d))
            mem = np.union1d(mem, [i])
            assigned[mem] = True
            groups.append(_Group(mem, patch))
        self._patches = fresh
        return groups

    def _base(self, q, x, gx):
        if gx is None:
            return _hot.source_first(self.grid.nodes, self.g, q, x, self.use_numba)
        return _hot.target_first(self.grid.nodes, q, x, gx, self.use_numba)

    def sum(self, phi, x, gx=None, groups=None) -> np.ndarray:
        """sum_i q_i k(zeta_i; x) (gx None) or sum_i q_i k(x, gx; zeta_i).

        ``phi`` may be a list of forms or a PolyFormBasis; the result then has
        one row per form and each kernel value is computed once for all of them.
        """
        x = np.atleast_2d(as_points(x))
        if groups is None:
            groups = self.cached_plan(x)
        if isinstance(phi, Form01):
            vals = phi
        elif hasattr(phi, "stack"):
            vals = phi.stack
        else:
            forms = list(phi)

            def vals(nodes):
                return np.stack([f(nodes) for f in forms])

        q = np.sum(vals(self.grid.nodes) * (self.grid.weights[:, None] * self.grid.form_jacobians),
                   axis=-1)
        out = self._base(q, x, gx)
        for grp in groups:
            P, xi = grp.patch, x[grp.idx]
            qp = np.sum(vals(P.nodes) * P.form, axis=-1)
            qb = q[..., P.base_idx] * P.base_chi
            if gx is None:
                corr = (_hot.source_first(P.nodes, P.grad, qp, xi, self.use_numba)
                        - _hot.source_first(self.grid.nodes[P.base_idx], self.g[P.base_idx],
                                            qb, xi, self.use_numba))
            else:
                gi = gx[grp.idx]
                corr = (_hot.target_first(P.nodes, qp, xi, gi, self.use_numba)
                        - _hot.target_first(self.grid.nodes[P.base_idx], qb, xi, gi,
                                            self.use_numba))
            out[..., grp.idx] += corr
        return out


_OPERATOR_CACHE: dict = {}


def boundary_operator(domain, grid, **kw) -> BoundaryOperator:
    key = (id(domain), id(grid), tuple(sorted(kw.items())))
    op = _OPERATOR_CACHE.get(key)
    if op is None or op.grid is not grid:
        if len(_OPERATOR_CACHE) > 8:
            _OPERATOR_CACHE.clear()
        op = BoundaryOperator(domain, grid, **kw)
        _OPERATOR_CACHE[key] = op
    return op


def clear_operator_cache():
    """Drop cached operators (and their plans and patches) once a grid is done with."""
    _OPERATOR_CACHE.clear()


def _ret(val, z):
    return val[..., 0] if np.ndim(as_points(z)) == 1 else val


# ------------------------------------------------------------- operators

def op_h_boundary(domain: ModelDomain, grid: BoundaryGrid, phi: Form01, z) -> complex:
    """H phi(z) = c_H int_{b Omega} H(zeta, z) phi ^ omega for interior z."""
    x = np.atleast_2d(as_points(z))
    if np.any(eval_rho(domain, x) >= -grid.level):
        raise GeometryError("target is not inside the grid's level set")
    op = boundary_operator(domain, grid)
    return _ret(C_H * op.sum(phi, x), z)


def _k_values(domain, phi, x, resolution, radial, chunk=8):
    # with a z-centred polar rule the kernel cancels against the Jacobian:
    # K(z) = -(1/pi^2) sum_theta dS R(theta) sum_x w_x sum_j phi_j(z + x R theta) conj(theta_j)
    rule = s3_rule(resolution)
    th = rule.theta
    xs, wx = np.polynomial.legendre.leggauss(radial)
    xs, wx = (xs + 1) / 2, wx / 2
    out = np.empty(len(x), dtype=complex)
    R_prev = None
    for s in range(0, len(x), chunk):
        for m in range(s, min(len(x), s + chunk)):
            c = x[m]
            R = ray_roots(domain, c, th, 0.0, r0=R_prev)
            R_prev = R
            pts = c + (R[:, None, None] * xs[None, :, None]) * th[:, None, :]
            v = phi(pts.reshape(-1, 2)).reshape(len(th), radial, 2)
            inner = np.sum(v * np.conj(th)[:, None, :], axis=-1) @ wx
            out[m] = -np.sum(rule.dS * R * inner) / np.pi**2
    return out


def _interiorise(domain, x):
    # boundary points move in by 1e-10 along the normal (K is Lipschitz up to b Omega)
    x = x.copy()
    r = eval_rho(domain, x)
    if np.any(r > 1e-9):
        raise GeometryError("K is evaluated on the closed domain only")
    edge = r > -1e-12
    if edge.any():
        nu = to_complex(outward_normal(domain, x[edge], tol=1e-9))
        x[edge] = x[edge] - 1e-10 * nu
    return x


def op_k_volume(domain: ModelDomain, vgrid: VolumeGrid, phi: Form01, z) -> complex:
    """The volume term K phi(z), on a polar rule centred at z (resolution from ``vgrid``)."""
    x = _interiorise(domain, np.atleast_2d(as_points(z)))
    radial = max(1, vgrid.size // (4 * vgrid.resolution**3))
    return _ret(_k_values(domain, phi, x, vgrid.resolution, radial), z)


def henkin_solve(domain: ModelDomain, grid: BoundaryGrid, vgrid: VolumeGrid, phi: Form01,
                 z=None, check: bool = True, tol: float = 1e-6, rule: Optional[PatchRule] = None):
    """T phi = H phi + K phi.  Returns a SolutionField, or its value(s) at ``z``."""
    kw = {} if rule is None else {"rule": rule}
    if check:
        phi.check_closed(vgrid.nodes[:: max(1, vgrid.size // 64)], tol)
    radial = max(1, vgrid.size // (4 * vgrid.resolution**3))

    def ev(pts):
        x = np.atleast_2d(as_points(pts))
        if np.any(eval_rho(domain, x) >= 0):
            raise GeometryError("Henkin solution is evaluated at interior points")
        op = boundary_operator(domain, grid, **kw)
        h = C_H * op.sum(phi, x)
        k = _k_values(domain, phi, x, vgrid.resolution, radial)
        return _ret(h + k, pts)

    u = SolutionField(ev, Provenance.HENKIN_INTERIOR, 0.0, domain)
    return u if z is None else u(z)


def _offset_points(domain, z, eps):
    z = np.atleast_2d(as_points(z))
    nu = to_complex(outward_normal(domain, z))
    return z, nu


def _check_eps(op: BoundaryOperator, z, eps):
    if eps <= 0:
        raise ResolutionError("eps must be positive")
    _, inn = op.tree.query(to_real(z))
    spacing = op.nn[inn].max()
    floor = op.floor if op.nf is not None else 2 * spacing
    if eps < floor:
        raise ResolutionError(f"eps = {eps:.3g} below the resolution floor {floor:.3g}")


def _richardson(fn, eps):
    return 2 * fn(eps / 2) - fn(eps)


def _op(domain, grid, rule):
    return boundary_operator(domain, grid) if rule is None else boundary_operator(domain, grid, rule=rule)


def op_h_plus(domain, grid, phi, z, eps: float, extrapolate: bool = False,
              rule: Optional[PatchRule] = None):
    """H+ phi(z) = c_H int H(zeta, z - eps nu(z)) phi ^ omega, z on b Omega."""
    op = _op(domain, grid, rule)
    zz, nu = _offset_points(domain, z, eps)

    def at(e):
        _check_eps(op, zz, e)
        return C_H * op.sum(phi, zz - e * nu)

    return _ret(_richardson(at, eps) if extrapolate else at(eps), z)


def op_h_minus(domain, grid, phi, z, eps: float, extrapolate: bool = False,
               rule: Optional[PatchRule] = None):
    """H- phi(z) = c_H int H(z + eps nu(z), zeta) phi ^ omega, z on b Omega."""
    op = _op(domain, grid, rule)
    zz, nu = _offset_points(domain, z, eps)

    def at(e):
        _check_eps(op, zz, e)
        x = zz + e * nu
        return C_H * op.sum(phi, x, gx=grad_rho(domain, x))

    return _ret(_richardson(at, eps) if extrapolate else at(eps), z)


def dbar_b_solve(domain, grid, phi, z, eps: float, extrapolate: bool = False,
                 check: bool = True, tol: float = 1e-6, rule: Optional[PatchRule] = None):
    """T_b phi(z) = H+ phi(z) - H- phi(z) at regularisation eps."""
    if check:
        ref = lp_norm(grid, tangential_part(domain, grid.nodes, phi), 1)
        if compatibility_check(grid, phi) > tol * max(ref, 1.0):
            raise DataError("phi fails the compatibility condition")
    return (op_h_plus(domain, grid, phi, z, eps, extrapolate, rule)
            - op_h_minus(domain, grid, phi, z, eps, extrapolate, rule))


def shaw_field(domain, grid, phi, eps: float, extrapolate: bool = False,
               rule: Optional[PatchRule] = None) -> SolutionField:
    """T_b phi as a SolutionField on boundary points (compatibility not rechecked)."""
    ev = lambda z: dbar_b_solve(domain, grid, phi, z, eps, extrapolate, check=False,  # noqa: E731
                                rule=rule)
    return SolutionField(ev, Provenance.SHAW_BOUNDARY, eps, domain)


def shaw_k_crosscheck(domain, grid, vgrid, phi, z, eps: float):
    """(K phi(z), -c_H int H(z + eps nu, zeta) phi ^ omega) at boundary z.

    The second value is the boundary expression for K at the exterior offset;
    it is a cross-check only, never used by the solvers.
    """
    k = op_k_volume(domain, vgrid, phi, z)
    return k, -op_h_minus(domain, grid, phi, z, eps, extrapolate=True)


# -------------------------------------------------------- compatibility

def monomial_test_forms(degree: int = 4) -> list:
    """p(z) dz1 ^ dz2 for all monomials p of degree <= ``degree``."""
    out = []
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            out.append(lambda z, a=a, b=b: as_points(z)[..., 0] ** a * as_points(z)[..., 1] ** b)
    return out


def compatibility_check(grid: BoundaryGrid, phi: Form01,
                        test_forms: Optional[Sequence[Callable]] = None) -> float:
    """max over the family of |int_{b Omega} phi ^ p dz1 ^ dz2|."""
    forms = monomial_test_forms() if test_forms is None else test_forms
    v = phi(grid.nodes)
    dens = grid.weights * np.sum(v * grid.form_jacobians, axis=-1)
    return float(max(abs(np.sum(dens * p(grid.nodes))) for p in forms))


# ---------------------------------------------------------------- norms

def lp_norm(grid: BoundaryGrid, u, p: float) -> float:
    u = np.asarray(u)
    if not np.all(np.isfinite(u)):
        raise DataError("non-finite values")
    a = np.abs(u)
    if np.isinf(p):
        return float(a.max())
    return float(np.sum(a**p * grid.weights) ** (1.0 / p))


def cr_vector(domain, z) -> np.ndarray:
    """Unit (0,1) vector annihilating d rho: coefficients (n2, -n1) of d/dzb1, d/dzb2."""
    n = complex_normal(outward_normal(domain, z, tol=1e-7))
    return np.stack([n[..., 1], -n[..., 0]], axis=-1)


def tangential_part(domain, z, phi: Form01) -> np.ndarray:
    """phi(Lbar) for the unit CR vector Lbar."""
    a = cr_vector(domain, z)
    return np.sum(phi(z) * a, axis=-1)


# ----------------------------------------------------------- FD checks

def _stencil(z, h):
    steps = np.array([[h, 0], [-h, 0], [1j * h, 0], [-1j * h, 0],
                      [0, h], [0, -h], [0, 1j * h], [0, -1j * h]], dtype=complex)
    return z[:, None, :] + steps[None]


def dbar_fd_residuals(u, phi: Form01, z, h: float, domain: Optional[ModelDomain] = None):
    """Relative residual max_j |FD du/dzb_j - phi_j| / (1 + max_j |phi_j|) at each z."""
    z = np.atleast_2d(as_points(z))
    domain = domain if domain is not None else getattr(u, "domain", None)
    st = _stencil(z, 2 * h)
    if domain is not None and np.any(eval_rho(domain, st) >= 0):
        raise GeometryError("FD stencil leaves the domain")
    vals = np.asarray(u(_stencil(z, h).reshape(-1, 2))).reshape(len(z), 8)
    d1 = 0.5 * ((vals[:, 0] - vals[:, 1]) + 1j * (vals[:, 2] - vals[:, 3])) / (2 * h)
    d2 = 0.5 * ((vals[:, 4] - vals[:, 5]) + 1j * (vals[:, 6] - vals[:, 7])) / (2 * h)
    f = phi(z)
    res = np.maximum(np.abs(d1 - f[:, 0]), np.abs(d2 - f[:, 1]))
    return res / (1 + np.max(np.abs(f), axis=-1))


def dbar_fd_check(u, phi: Form01, z, h: float, domain=None) -> float:
    return float(dbar_fd_residuals(u, phi, z, h, domain)[0])


def _cr_real_vectors(domain, z):
    a = cr_vector(domain, z)
    return to_real(np.conj(a)), to_real(1j * np.conj(a))


def dbarb_fd_check(domain, grid: BoundaryGrid, u, phi: Form01, node: int,
                   radius_factor: float = 3.0) -> float:
    """Tangential residual |Lbar u - phi(Lbar)| / (1 + |phi(Lbar)|) from a local LSQ fit."""
    x = to_real(grid.nodes)
    x0 = x[node]
    rad = radius_factor * grid.local_spacing[node]
    nb = np.array(_ball(grid, x0, rad), dtype=int)
    nb = nb[nb != node]
    if len(nb) < 6:
        raise ResolutionError("fewer than 6 neighbours for the tangential fit")
    nu = grid.normals[node]
    E = np.linalg.qr(np.column_stack([nu, np.eye(4)]))[0][:, 1:4].T    # tangent basis (3, 4)
    t = (x[np.r_[node, nb]] - x0) @ E.T
    cols = [np.ones(len(t)), t[:, 0], t[:, 1], t[:, 2]]
    if len(nb) >= 12:
        cols += [t[:, i] * t[:, j] for i in range(3) for j in range(i, 3)]
    A = np.column_stack(cols)
    uu = np.asarray(u)[np.r_[node, nb]]
    coef = np.linalg.lstsq(A, uu, rcond=None)[0]
    grad = coef[1:4]
    V1, V2 = _cr_real_vectors(domain, grid.nodes[node])
    lbar = 0.5 * (E @ V1 @ grad + 1j * (E @ V2 @ grad))
    f = tangential_part(domain, grid.nodes[node], phi)
    return float(abs(lbar - f) / (1 + abs(f)))


_BALLS: dict = {}


def _ball(grid, x0, rad):
    tree = _BALLS.get(id(grid))
    if tree is None or tree[0] is not grid:
        tree = (grid, cKDTree(to_real(grid.nodes)))
        _BALLS.clear()
        _BALLS[id(grid)] = tree
    return sorted(tree[1].query_ball_point(x0, rad))


def project_to_boundary(domain, y, iters: int = 50):
    """Move y onto b Omega along its own normal line (Newton in one variable)."""
    y = np.atleast_2d(as_points(y)).copy()
    nu = to_complex(outward_normal(domain, y, tol=np.inf))
    t = np.zeros(len(y))
    for _ in range(iters):
        p = y + t[:, None] * nu
        val = eval_rho(domain, p)
        der = 2 * np.real(np.sum(grad_rho(domain, p) * nu, axis=-1))
        step = val / der
        t -= step
        if np.all(np.abs(step) < 1e-15):
            break
    return y + t[:, None] * nu


def dbarb_stencil_residuals(domain, u: Callable, phi: Form01, z, h: float) -> np.ndarray:
    """Tangential residual of a boundary field at points z, from 4 projected neighbours."""
    z = np.atleast_2d(as_points(z))
    V1, V2 = _cr_real_vectors(domain, z)
    pts = []
    for V in (V1, V2):
        for s in (h, -h):
            pts.append(project_to_boundary(domain, z + s * to_complex(V)))
    vals = np.asarray(u(np.concatenate(pts))).reshape(4, len(z))
    lbar = 0.5 * ((vals[0] - vals[1]) + 1j * (vals[2] - vals[3])) / (2 * h)
    f = tangential_part(domain, z, phi)
    return np.abs(lbar - f) / (1 + np.abs(f))


# ------------------------------------------------------------ probes

def gradient_probe(domain, grid, phi: Form01, x, s: float, side: str = "+",
                   h: Optional[float] = None):
    """(|grad H^+- phi| at x -+ s nu, G(s)/s * sup|phi|)."""
    from .type_analysis import g_function

    if side not in ("+", "-"):
        raise PreconditionError("side is '+' or '-'")
    op = boundary_operator(domain, grid)
    x = as_points(x)
    nu = to_complex(outward_normal(domain, x))
    y = x - s * nu if side == "+" else x + s * nu
    h = s / 20 if h is None else h
    steps = np.concatenate([np.eye(4), -np.eye(4)]) * h
    pts = y + to_complex(steps)
    _check_eps(op, x[None, :], s)
    if side == "+":
        vals = op.sum(phi, pts)
    else:
        vals = op.sum(phi, pts, gx=grad_rho(domain, pts))
    grad = C_H * (vals[:4] - vals[4:]) / (2 * h)
    mag = float(np.sqrt(np.sum(np.abs(grad) ** 2)))
    sup = float(np.max(np.linalg.norm(phi(grid.nodes), axis=-1)))
    env = g_function([domain.f_type], domain.setting, s) / s * sup
    return mag, env
