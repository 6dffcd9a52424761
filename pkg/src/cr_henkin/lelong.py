"""(1,1)-forms, Rudin and Poincare-Lelong solutions, mollified log|h| and the
Nevanlinna pipeline.

A (1,1)-form is alpha = sum alpha_{j kbar} dz_j ^ dzb_k with coefficient
matrix A(z) (shape (..., 2, 2)).  alpha is a real form when A is
anti-hermitian (alpha = i dd^c-type, e.g. i ddbar w) and an imaginary form
when A is hermitian (e.g. ddbar w).

Rudin potential (centre p, alpha = 0 near p):

    f_k(z) = sum_j (z_j - p_j) int_0^1 t alpha_{j kbar}(p + t (z - p)) dt,

so that dbar f = 0 and  df - dbar fbar = alpha  for imaginary alpha
(df + dbar fbar = alpha for real alpha).  For real alpha the potential
u = 2 Re v with dbar v = -i f satisfies i ddbar u = alpha.
"""
from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, ndimage, optimize
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DataError, GeometryError, PreconditionError, ResolutionError
from .geometry import ModelDomain, Setting, as_points, eval_rho, to_complex, to_real
from .grids import (BoundaryGrid, VolumeGrid, _safe_rho, build_boundary_grid, build_volume_grid,
                    ray_roots, s3_rule)
from . import _hot
from ._accel import USE_NUMBA
from .nearfield import PatchRule
from .operators import Form01, PolyFunction, Provenance, SolutionField, henkin_solve
from .type_analysis import type_integral_complex, type_integral_real

log = logging.getLogger(__name__)

RUDIN_MIN_NODES = 32


# ------------------------------------------------------------ potentials

def smoothstep(s, s0: float, s1: float):
    """C-infinity step 0 -> 1 on [s0, s1] and its first two derivatives in s."""
    s = np.asarray(s, dtype=float)
    u = (s - s0) / (s1 - s0)
    inside = (u > 0) & (u < 1)
    # within 1e-3 of either end exp(-1/u) < 1e-434: flat to double precision
    inside = inside & (u > 1e-3) & (u < 1 - 1e-3)
    uu = np.where(inside, u, 0.5)
    v = 1 - uu
    L = 1 / v - 1 / uu                     # log(A / B) with A = exp(-1/u), B = exp(-1/v)
    P = 0.5 * (1 + np.tanh(L / 2))
    L1 = 1 / uu**2 + 1 / v**2
    L2 = -2 / uu**3 + 2 / v**3
    Q = P * (1 - P)
    d1 = Q * L1
    d2 = Q * (1 - 2 * P) * L1**2 + Q * L2
    k = 1.0 / (s1 - s0)
    P = np.where(inside, P, (u >= 0.5).astype(float))
    d1 = np.where(inside, d1 * k, 0.0)
    d2 = np.where(inside, d2 * k * k, 0.0)
    return P, d1, d2


@dataclass(frozen=True)
class Potential:
    """w(z) = Psi(|z|^2) q(z) with Psi a smooth step from 0 (|z| <= r0) to 1 (|z| >= r1).

    Without ``cutoff`` Psi = 1.  Derivatives are analytic.
    """

    q: PolyFunction
    cutoff: Optional[tuple] = None

    def _psi(self, z):
        s = np.sum(np.abs(z) ** 2, axis=-1)
        if self.cutoff is None:
            one = np.ones_like(s)
            return one, 0 * one, 0 * one
        r0, r1 = self.cutoff
        return smoothstep(s, r0 * r0, r1 * r1)

    def __call__(self, z):
        z = as_points(z)
        return self._psi(z)[0] * self.q(z)

    def ddbar(self, z) -> np.ndarray:
        """d_j dbar_k w, shape (..., 2, 2)."""
        z = as_points(z)
        P, P1, P2 = self._psi(z)
        q = self.q(z)
        zb = np.conj(z)
        out = np.empty(z.shape[:-1] + (2, 2), dtype=complex)
        for j in range(2):
            qj = self.q.dz(j)(z)
            for k in range(2):
                qk = self.q.dzb(k)(z)
                qjk = self.q.dz(j).dzb(k)(z)
                out[..., j, k] = (P2 * zb[..., j] * z[..., k] * q + P1 * (j == k) * q
                                  + P1 * zb[..., j] * qk + P1 * z[..., k] * qj + P * qjk)
        return out


def poly(terms) -> PolyFunction:
    """PolyFunction from ((a, b, c, d), coef) pairs."""
    e = np.array([t[0] for t in terms], dtype=int).reshape(-1, 4)
    c = np.array([t[1] for t in terms], dtype=complex)
    return PolyFunction(e, c)


# ------------------------------------------------------------ (1,1)-forms

def _fd_wirtinger(F, pts, j, h, bar):
    # d/dz_j or d/dzb_j of a vectorised F by central differences
    e = np.zeros(2, dtype=complex)
    e[j] = h
    dx = (F(pts + e) - F(pts - e)) / (2 * h)
    dy = (F(pts + 1j * e) - F(pts - 1j * e)) / (2 * h)
    return 0.5 * (dx + 1j * dy) if bar else 0.5 * (dx - 1j * dy)


@dataclass(frozen=True)
class Form11:
    """alpha = sum alpha_{j kbar} dz_j ^ dzb_k; ``coeffs`` maps (..., 2) -> (..., 2, 2).

    ``support_radius`` is a radius r such that alpha = 0 on B(center, r).
    """

    coeffs: Callable
    support_radius: float = 0.0
    name: str = ""
    center: tuple = (0j, 0j)

    def __call__(self, z) -> np.ndarray:
        z = as_points(z)
        return np.broadcast_to(np.asarray(self.coeffs(z), dtype=complex), z.shape[:-1] + (2, 2))

    @staticmethod
    def from_potential(w: Potential, factor: complex = 1j, name: str = "") -> "Form11":
        """factor * ddbar w (factor = i gives the real form i ddbar w)."""
        return PotentialForm(w, factor, name or "i ddbar w")

    @staticmethod
    def constant(A, name: str = "") -> "Form11":
        A = np.asarray(A, dtype=complex)
        return Form11(lambda z: np.broadcast_to(A, np.shape(z)[:-1] + (2, 2)), 0.0, name)

    def reality(self, points, tol: float = 1e-12) -> int:
        """+1 real form (A anti-hermitian), -1 imaginary form (A hermitian), 0 neither."""
        A = self(points)
        AH = np.conj(np.swapaxes(A, -1, -2))
        scale = max(1.0, float(np.max(np.abs(A))))
        if np.max(np.abs(A + AH)) <= tol * scale:
            return 1
        if np.max(np.abs(A - AH)) <= tol * scale:
            return -1
        return 0

    def closedness_residual(self, points, h: float = 1e-4) -> float:
        """max |d alpha| by central differences (four component identities)."""
        pts = np.atleast_2d(as_points(points))
        c = lambda j, k: (lambda z: self(z)[..., j, k])  # noqa: E731
        res = []
        for k in range(2):      # d alpha: d_1 a_{2k} - d_2 a_{1k}
            res.append(_fd_wirtinger(c(1, k), pts, 0, h, False) - _fd_wirtinger(c(0, k), pts, 1, h, False))
        for j in range(2):      # dbar alpha: dbar_1 a_{j2} - dbar_2 a_{j1}
            res.append(_fd_wirtinger(c(j, 1), pts, 0, h, True) - _fd_wirtinger(c(j, 0), pts, 1, h, True))
        return float(np.max(np.abs(res)))

    def check_closed(self, points, tol: float = 1e-6, h: float = 1e-4) -> None:
        r = self.closedness_residual(points, h)
        if r > tol:
            raise DataError(f"alpha is not d-closed (residual {r:.3g})")

    def is_positive(self, points, tol: float = 1e-12) -> bool:
        """alpha = i sum a_{j kbar} dz_j ^ dzb_k with a hermitian positive semidefinite."""
        a = -1j * self(points)
        aH = np.conj(np.swapaxes(a, -1, -2))
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - aH)) > tol * scale:
            return False
        ev = np.linalg.eigvalsh(0.5 * (a + aH))
        return bool(np.all(ev >= -tol * scale))

    def l1_norm(self, vgrid: VolumeGrid) -> float:
        """sum over j, k of int_Omega |alpha_{j kbar}| dV."""
        A = self(vgrid.nodes)
        return float(np.sum(np.abs(A).sum(axis=(-1, -2)) * vgrid.weights))

    def rudin(self, z, nodes: int = RUDIN_MIN_NODES) -> np.ndarray:
        """Rudin potential at z by Gauss-Legendre in t."""
        if nodes < RUDIN_MIN_NODES:
            raise ResolutionError(f"Rudin quadrature needs at least {RUDIN_MIN_NODES} nodes")
        z = as_points(z)
        p = np.asarray(self.center, dtype=complex)
        x, w = np.polynomial.legendre.leggauss(nodes)
        dz = z - p
        # alpha vanishes for t |z - p| < support_radius: integrate over [t0, 1] only
        nz = np.linalg.norm(dz, axis=-1)
        t0 = np.where(nz > self.support_radius, self.support_radius / np.where(nz > 0, nz, 1.0), 1.0)
        half = (1 - t0) / 2
        out = np.zeros(z.shape, dtype=complex)
        for xk, wk in zip(x, w):
            tk = t0 + half * (xk + 1)
            A = self(p + tk[..., None] * dz)
            out += (wk * half * tk)[..., None] * np.einsum("...j,...jk->...k", dz, A)
        return out


class PotentialForm(Form11):
    """factor * ddbar w for w = Psi(|z|^2) q(z), with a fast Rudin potential.

    Every coefficient is sum_i Psi^(i)(|z|^2) P_i(z) with polynomial P_i, so
    along the ray t z the Rudin integrals reduce to the one-variable tables
    I_{i,d}(s) = int_0^1 t^(1+d) Psi^(i)(t^2 s) dt, d the degree of a
    homogeneous part of P_i.
    """

    def __init__(self, w: Potential, factor: complex = 1j, name: str = ""):
        r0 = 0.0 if w.cutoff is None else float(w.cutoff[0])
        super().__init__(lambda z: factor * w.ddbar(z), r0, name)
        object.__setattr__(self, "potential", w)
        object.__setattr__(self, "factor", complex(factor))
        object.__setattr__(self, "_parts", self._split())
        object.__setattr__(self, "_tables", {})

    def _split(self):
        # {(i, j, k, d): (exps, coefs)} for the homogeneous pieces of P_i in alpha_{j kbar}
        q = self.potential.q
        parts: dict = {}

        def add(i, j, k, e, c):
            for row, cf in zip(np.atleast_2d(e), np.atleast_1d(c)):
                if cf == 0:
                    continue
                key = (i, j, k, int(row.sum()))
                parts.setdefault(key, ([], []))
                parts[key][0].append(row)
                parts[key][1].append(cf)

        def shifted(p, add_e):
            return p.exps + np.asarray(add_e, dtype=int), p.coefs

        for j in range(2):
            for k in range(2):
                ej = np.eye(4, dtype=int)[2 + j]          # conj z_j
                ek = np.eye(4, dtype=int)[k]              # z_k
                add(2, j, k, *shifted(q, ej + ek))
                if j == k:
                    add(1, j, k, q.exps, q.coefs)
                qk, qj = q.dzb(k), q.dz(j)
                if len(qk.coefs):
                    add(1, j, k, *shifted(qk, ej))
                if len(qj.coefs):
                    add(1, j, k, *shifted(qj, ek))
                qjk = q.dz(j).dzb(k)
                if len(qjk.coefs):
                    add(0, j, k, qjk.exps, qjk.coefs)
        if self.potential.cutoff is None:
            parts = {key: v for key, v in parts.items() if key[0] == 0}
        return {key: PolyFunction(np.array(e), np.array(c)) for key, (e, c) in parts.items()}

    def _tables_for(self, smax):
        # cubic splines of I_{i,d} on a uniform grid in s = |z|^2, rebuilt when s outgrows them
        if self._tables and self._tables["smax"] >= smax:
            return self._tables
        smax = max(16.0, 2 * smax)
        s = np.linspace(0.0, smax, int(1000 * smax) + 1)
        keys = sorted({(i, d) for (i, _, _, d) in self._parts})
        x, w = np.polynomial.legendre.leggauss(64)
        splines = {}
        for i, d in keys:
            if self.potential.cutoff is None:
                vals = np.full_like(s, 1.0 / (2 + d) if i == 0 else 0.0)
            else:
                r0, r1 = self.potential.cutoff
                ss = np.maximum(s, 1e-300)
                # panels split where t^2 s crosses r0^2 and r1^2
                b0 = np.minimum(1.0, r0 / np.sqrt(ss))
                b1 = np.clip(r1 / np.sqrt(ss), b0, 1.0)
                vals = np.zeros_like(s)
                for lo, hi in ((b0, b1), (b1, np.ones_like(s))):
                    t = lo[:, None] + (hi - lo)[:, None] * (x + 1) / 2
                    g = smoothstep(t * t * s[:, None], r0 * r0, r1 * r1)[i]
                    vals += (hi - lo) / 2 * np.sum(w * t ** (1 + d) * g, axis=1)
            splines[(i, d)] = CubicSpline(s, vals)
        parts = [(key, P) for key, P in self._parts.items()]
        flat = {
            "exps": np.concatenate([P.exps for _, P in parts]).astype(np.int64),
            "coefs": np.concatenate([P.coefs for _, P in parts]).astype(complex),
            "kk": np.concatenate([np.full(len(P.coefs), key[2]) for key, P in parts]),
            "jj": np.concatenate([np.full(len(P.coefs), key[1]) for key, P in parts]),
            "tab": np.concatenate([np.full(len(P.coefs), keys.index((key[0], key[3])))
                                   for key, P in parts]),
            "C": np.stack([splines[k].c for k in keys]),
            "ds": s[1] - s[0],
        }
        self._tables.clear()
        self._tables.update(smax=smax, splines=splines, flat=flat)
        return self._tables

    def rudin(self, z, nodes: int = RUDIN_MIN_NODES, use_numba: bool = USE_NUMBA) -> np.ndarray:
        if nodes < RUDIN_MIN_NODES:
            raise ResolutionError(f"Rudin quadrature needs at least {RUDIN_MIN_NODES} nodes")
        z = as_points(z)
        s = np.sum(np.abs(z) ** 2, axis=-1)
        tabs = self._tables_for(float(np.max(s, initial=0.0)))
        if not self._parts:
            return np.zeros(z.shape, dtype=complex)
        if use_numba and USE_NUMBA:
            f = tabs["flat"]
            out = _hot.poly_table(z.reshape(-1, 2), f["exps"], f["coefs"], f["kk"], f["jj"],
                                  f["tab"], f["C"], f["ds"]).reshape(z.shape)
            return self.factor * out
        out = np.zeros(z.shape, dtype=complex)
        for (i, j, k, d), P in self._parts.items():
            out[..., k] += z[..., j] * P(z) * tabs["splines"][(i, d)](s)
        return self.factor * out


def rudin_solve(alpha: Form11, z, nodes: int = RUDIN_MIN_NODES) -> np.ndarray:
    """f = f_1 dzb1 + f_2 dzb2 at z, shape (..., 2)."""
    return alpha.rudin(z, nodes)


def rudin_form(alpha: Form11, nodes: int = RUDIN_MIN_NODES, factor: complex = 1.0) -> Form01:
    """factor * f as a (0,1)-form."""
    return Form01(lambda z: factor * alpha.rudin(z, nodes)[..., 0],
                  lambda z: factor * alpha.rudin(z, nodes)[..., 1],
                  f"rudin({alpha.name})", lambda z: factor * alpha.rudin(z, nodes))


def rudin_residuals(alpha: Form11, z, h: float = 1e-4, sign: Optional[int] = None,
                    nodes: int = RUDIN_MIN_NODES) -> tuple:
    """(max |dbar f|, max |df -+ dbar fbar - alpha|) by central differences.

    ``sign`` = -1 checks df - dbar fbar (imaginary alpha), +1 checks
    df + dbar fbar (real alpha); by default it follows ``alpha.reality``.
    """
    pts = np.atleast_2d(as_points(z))
    if sign is None:
        r = alpha.reality(pts)
        if r == 0:
            raise DataError("alpha is neither a real nor an imaginary form")
        sign = -1 if r < 0 else 1
    F = lambda k: (lambda x: alpha.rudin(x, nodes)[..., k])  # noqa: E731
    d = np.empty(pts.shape[:-1] + (2, 2), dtype=complex)       # d[a, b] = d_a f_b
    db = np.empty_like(d)                                      # db[a, b] = dbar_a f_b
    for a in range(2):
        for b in range(2):
            d[..., a, b] = _fd_wirtinger(F(b), pts, a, h, False)
            db[..., a, b] = _fd_wirtinger(F(b), pts, a, h, True)
    dbar_res = np.abs(db[..., 0, 1] - db[..., 1, 0])
    # coefficient of dz_a ^ dzb_b in df - sign' dbar fbar: d_a f_b + conj(d_b f_a) for sign -1
    lhs = d + (-sign) * np.conj(np.swapaxes(d, -1, -2))
    ident = np.abs(lhs - alpha(pts)).max(axis=(-1, -2))
    return float(dbar_res.max()), float(ident.max())


@dataclass(frozen=True)
class RudinL1:
    f_boundary: float
    f_volume: float
    alpha: float

    @property
    def ratio(self) -> float:
        return (self.f_boundary + self.f_volume) / self.alpha


def rudin_l1_check(alpha: Form11, grid: BoundaryGrid, vgrid: VolumeGrid,
                   nodes: int = RUDIN_MIN_NODES) -> RudinL1:
    """||f||_L1(b Omega) + ||f||_L1(Omega) against ||alpha||_L1(Omega)."""
    if alpha.support_radius <= 0:
        raise PreconditionError("alpha must vanish on a ball around the centre")
    a = alpha.l1_norm(vgrid)
    if a == 0:
        raise DataError("||alpha||_L1 = 0: the ratio is undefined")
    fb = np.linalg.norm(alpha.rudin(grid.nodes, nodes), axis=-1)
    fv = np.linalg.norm(alpha.rudin(vgrid.nodes, nodes), axis=-1)
    return RudinL1(float(fb @ grid.weights), float(fv @ vgrid.weights), a)


# -------------------------------------------------------- Poincare-Lelong

def poincare_lelong_solve(alpha: Form11, domain: ModelDomain, grid: BoundaryGrid,
                          vgrid: VolumeGrid, z=None, nodes: int = RUDIN_MIN_NODES,
                          check: bool = True, rule: Optional[PatchRule] = None):
    """u = 2 Re v with dbar v = -i f, f the Rudin potential: i ddbar u = alpha.

    Returns a real-valued SolutionField, or its values at ``z``.
    """
    if alpha.support_radius <= 0:
        raise PreconditionError("alpha must vanish on a ball around the Rudin centre")
    phi = rudin_form(alpha, nodes, -1j)
    v = henkin_solve(domain, grid, vgrid, phi, check=check, rule=rule)

    def ev(pts):
        return 2.0 * np.real(v(pts))

    u = SolutionField(ev, Provenance.PL_POTENTIAL, 0.0, domain)
    return u if z is None else u(z)


_LINE_DIRS = np.array([[1, 0], [0, 1], [1, 1], [1, 1j]], dtype=complex)


def ddbar_fd(u: Callable, z, h: float) -> np.ndarray:
    """d_j dbar_k u at z, shape (n, 2, 2), from 17 values.

    Along a complex line z + lam a, d_lam dbar_lam u = sum a_j conj(a_k) D_jk
    is a quarter of the 5-point Laplacian in lam; four directions give D.
    """
    z = np.atleast_2d(as_points(z))
    offs = [np.zeros(2, complex)]
    for a in _LINE_DIRS:
        offs += [h * a, -h * a, 1j * h * a, -1j * h * a]
    offs = np.array(offs)
    pts = z[:, None, :] + offs[None]
    vals = np.asarray(u(pts.reshape(-1, 2))).reshape(len(z), len(offs))
    c = vals[:, 0]
    Q = [(vals[:, 1 + 4 * m:5 + 4 * m].sum(axis=1) - 4 * c) / (4 * h * h) for m in range(4)]
    d11, d22 = Q[0], Q[1]
    X = Q[2] - d11 - d22
    Y = Q[3] - d11 - d22
    out = np.empty((len(z), 2, 2), dtype=complex)
    out[:, 0, 0], out[:, 1, 1] = d11, d22
    out[:, 0, 1] = (X + 1j * Y) / 2
    out[:, 1, 0] = (X - 1j * Y) / 2
    return out


def ddbar_fd_residuals(u: Callable, alpha: Form11, z, h: float) -> np.ndarray:
    """max_{j,k} |i d_j dbar_k u - alpha_{j kbar}| per point."""
    D = 1j * ddbar_fd(u, z, h)
    return np.abs(D - alpha(np.atleast_2d(as_points(z)))).max(axis=(-1, -2))


# -------------------------------------------------------------- mollifier

def _bump(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 0.5
    xx = np.where(inside, x, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - 4.0 * xx * xx)), 0.0)


_C1 = integrate.quad(_bump, -0.5, 0.5, epsabs=0, epsrel=1e-13)[0]
_C4 = 2 * np.pi**2 * integrate.quad(lambda x: _bump(x) * x**3, 0, 0.5, epsabs=0, epsrel=1e-13)[0]


@dataclass(frozen=True)
class Mollifier:
    """Bump profile supported in (-1/2, 1/2) and its radial kernels at scale eps.

    ``profile`` has unit integral on R.  Convolutions on C^2 use ``radial``,
    the same bump as a radial kernel normalised to unit integral on R^4.
    """

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise PreconditionError("mollifier scale must be positive")

    @property
    def support(self) -> float:
        return 0.5 * self.epsilon

    def profile(self, x):
        return _bump(x) / _C1

    def scaled(self, x):
        """phi_eps(x) = phi(x / eps) / eps."""
        return self.profile(np.asarray(x) / self.epsilon) / self.epsilon

    def radial(self, r):
        """k_eps(|x|) with int_{R^4} k_eps = 1."""
        e = self.epsilon
        return _bump(np.asarray(r) / e) / (_C4 * e**4)

    @cached_property
    def _marginal_spline(self):
        x = np.linspace(0.0, 0.5, 20001)
        g = _bump(x) * x
        tail = integrate.cumulative_trapezoid(g[::-1], -x[::-1], initial=0.0)[::-1]
        return CubicSpline(x, 2 * np.pi * tail / _C4)

    def marginal(self, s):
        """int_C k_eps(sqrt(s^2 + |xi|^2)) dA(xi): the kernel seen by a complex line at distance s."""
        x = np.asarray(s, dtype=float) / self.epsilon
        out = self._marginal_spline(np.clip(x, 0.0, 0.5)) / self.epsilon**2
        return np.where(x < 0.5, out, 0.0)


def _log_abs(h, pts, domain=None):
    hv = np.asarray(h(pts))
    with np.errstate(divide="ignore"):
        lg = np.log(np.abs(hv))
    if domain is not None:
        lg = np.where(_safe_rho(domain, pts) < 0, lg, 0.0)
    return lg


def mollify_log_modulus(h: Callable, moll: Mollifier, z, domain: Optional[ModelDomain] = None,
                        n_dir: int = 8, n_rad: int = 12, chunk: int = 16):
    """v_eps(z) = int log|h(w)| k_eps(|z - w|) dV(w).

    With ``domain`` given, h is taken to be 1 outside it.  A quadrature node
    on a zero of h makes the value -inf, which is returned as such.
    """
    x = np.atleast_2d(as_points(z))
    rule = s3_rule(n_dir)
    r, wr = np.polynomial.legendre.leggauss(n_rad)
    r = (r + 1) * moll.support / 2
    wr = wr * moll.support / 2 * moll.radial(r) * r**3
    W = (rule.dS[:, None] * wr[None, :]).ravel()
    W = W / W.sum()
    off = (rule.theta[:, None, :] * r[None, :, None]).reshape(-1, 2)
    out = np.empty(len(x))
    for s in range(0, len(x), chunk):
        xs = x[s:s + chunk]
        lg = _log_abs(h, (xs[:, None, :] + off[None]).reshape(-1, 2), domain).reshape(len(xs), -1)
        out[s:s + chunk] = lg @ W
    return out[0] if np.ndim(as_points(z)) == 1 else out


# --------------------------------------------------------------- divisors

@dataclass(frozen=True)
class DivisorPatch:
    """A piece of a complex curve: ``map`` sends (u, v) in [0,1]^2 into C^2.

    ``line = (b, c)`` marks a piece of the complex line {b . z = c}; ``area``
    optionally gives the induced area element analytically.
    """

    map: Callable
    multiplicity: int = 1
    line: Optional[tuple] = None
    area: Optional[Callable] = None

    def quadrature(self, n: int) -> tuple:
        """Nodes (K, 2), induced area weights (K,), unit normal covectors (K, 2)."""
        x, w = np.polynomial.legendre.leggauss(n)
        x, w = (x + 1) / 2, w / 2
        U, V = np.meshgrid(x, x, indexing="ij")
        W = np.outer(w, w).ravel()
        U, V = U.ravel(), V.ravel()
        P = as_points(self.map(U, V))
        e = 1e-6
        Xu = (as_points(self.map(U + e, V)) - as_points(self.map(U - e, V))) / (2 * e)
        Xv = (as_points(self.map(U, V + e)) - as_points(self.map(U, V - e))) / (2 * e)
        if self.area is not None:
            A = np.asarray(self.area(U, V), dtype=float)
        else:
            a, b = to_real(Xu), to_real(Xv)
            A = np.sqrt(np.maximum(np.sum(a * a, -1) * np.sum(b * b, -1) - np.sum(a * b, -1) ** 2, 0))
        if self.line is not None:
            b = np.asarray(self.line[0], dtype=complex)
            nu = np.broadcast_to(b / np.linalg.norm(b), P.shape)
        else:
            tau = np.where(np.linalg.norm(Xu, axis=-1, keepdims=True) > 0, Xu, Xv)
            nu = np.stack([tau[:, 1], -tau[:, 0]], axis=-1)
            nu = nu / np.linalg.norm(nu, axis=-1, keepdims=True)
        return P, A * W, nu


def line_patch(domain: ModelDomain, b, c: complex, multiplicity: int = 1) -> DivisorPatch:
    """{b . z = c} intersected with the domain, in polar coordinates on the line."""
    b = np.asarray(b, dtype=complex)
    nb = np.linalg.norm(b)
    if nb == 0:
        raise DataError("line normal must be non-zero")
    tau = np.array([b[1], -b[0]]) / nb
    p0 = c * np.conj(b) / nb**2
    # a point of the line inside the domain: minimise rho over the line
    from scipy.optimize import minimize

    def rho_l(v):
        return float(_safe_rho(domain, (p0 + (v[0] + 1j * v[1]) * tau)[None, :])[0])

    res = minimize(rho_l, np.zeros(2), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000})
    if not res.fun < 0:
        raise GeometryError("the line misses the domain")
    pc = p0 + (res.x[0] + 1j * res.x[1]) * tau

    def radius(v):
        e = np.exp(2j * np.pi * np.asarray(v, dtype=float))
        return ray_roots(domain, pc, e.reshape(-1)[:, None] * tau, 0.0).reshape(np.shape(e))

    def fmap(u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        lam = u * radius(v) * np.exp(2j * np.pi * v)
        return pc + lam[..., None] * tau

    def area(u, v):
        return 2 * np.pi * np.asarray(u) * radius(v) ** 2

    return DivisorPatch(fmap, multiplicity, (tuple(b), complex(c)), area)


@dataclass(frozen=True)
class Divisor:
    patches: tuple

    def quadrature(self, n: int = 48) -> tuple:
        if not self.patches:
            return (np.zeros((0, 2), complex), np.zeros(0), np.zeros((0, 2), complex),
                    np.zeros(0, dtype=int))
        P, W, N, M = [], [], [], []
        for p in self.patches:
            a, b, c = p.quadrature(n)
            P.append(a)
            W.append(b)
            N.append(c)
            M.append(np.full(len(b), p.multiplicity))
        return np.concatenate(P), np.concatenate(W), np.concatenate(N), np.concatenate(M)

    @property
    def lines(self) -> list:
        return [(np.asarray(p.line[0], complex), p.line[1], p.multiplicity)
                for p in self.patches if p.line is not None]


def _terms(text, field_name, line_no):
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split()
        if len(parts) != 4:
            raise ConfigError("polynomial term must read 'a b re im'", line_no, field_name)
        try:
            a, b = int(parts[0]), int(parts[1])
            out.append((a, b, float(parts[2]) + 1j * float(parts[3])))
        except ValueError as exc:
            raise ConfigError(f"bad polynomial term {item!r}", line_no, field_name) from exc
    return out


def _poly_map(t1, t2):
    def ev(terms, u, v):
        acc = 0j
        for a, b, c in terms:
            acc = acc + c * u**a * v**b
        return acc + 0 * u

    def fmap(u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return np.stack([ev(t1, u, v), ev(t2, u, v)], axis=-1)

    return fmap


def load_divisor(path, domain: ModelDomain) -> Divisor:
    """Read patches from an INI file with sections [patch.<name>].

    kind = line   needs  b = re1 im1 re2 im2  and  c = re im
    kind = poly   needs  z1 = a b re im; ...   and  z2 = ...   (terms u^a v^b)
    Both accept multiplicity (default 1).
    """
    cp = configparser.ConfigParser()
    with open(path) as fh:
        text = fh.read()
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc), getattr(exc, "lineno", None)) from exc
    lines = text.splitlines()

    def line_of(key):
        for i, ln in enumerate(lines, 1):
            if ln.strip().split("=")[0].strip() == key:
                return i
        return None

    patches = []
    for sec in cp.sections():
        if not sec.startswith("patch."):
            raise ConfigError(f"unknown section [{sec}]", line_of(f"[{sec}]"), sec)
        s = cp[sec]
        allowed = {"kind", "multiplicity", "b", "c", "z1", "z2"}
        for k in s:
            if k not in allowed:
                raise ConfigError(f"unknown key {k!r}", line_of(k), f"{sec}.{k}")
        kind = s.get("kind", "line")
        try:
            mult = int(s.get("multiplicity", "1"))
        except ValueError as exc:
            raise ConfigError("multiplicity must be an integer", line_of("multiplicity"),
                              f"{sec}.multiplicity") from exc
        if mult < 1:
            raise ConfigError("multiplicity must be positive", line_of("multiplicity"),
                              f"{sec}.multiplicity")
        if kind == "line":
            try:
                bv = [float(t) for t in s["b"].split()]
                cv = [float(t) for t in s.get("c", "0 0").split()]
                if len(bv) != 4 or len(cv) != 2:
                    raise ValueError
            except (KeyError, ValueError) as exc:
                raise ConfigError("line needs b = 4 reals and c = 2 reals", line_of("b"),
                                  f"{sec}.b") from exc
            patches.append(line_patch(domain, (bv[0] + 1j * bv[1], bv[2] + 1j * bv[3]),
                                      cv[0] + 1j * cv[1], mult))
        elif kind == "poly":
            if "z1" not in s or "z2" not in s:
                raise ConfigError("poly patch needs z1 and z2", line_of(f"[{sec}]"), sec)
            t1 = _terms(s["z1"], f"{sec}.z1", line_of("z1"))
            t2 = _terms(s["z2"], f"{sec}.z2", line_of("z2"))
            patches.append(DivisorPatch(_poly_map(t1, t2), mult))
        else:
            raise ConfigError(f"unknown patch kind {kind!r}", line_of("kind"), f"{sec}.kind")
    if not patches:
        raise ConfigError("no [patch.*] sections")
    return Divisor(tuple(patches))


def blaschke_sum(divisor: Divisor, domain: ModelDomain, nodes: int = 48) -> float:
    """sum_k n_k int_{X_k} |rho| dmu (induced area measure)."""
    total = 0.0
    for p in divisor.patches:
        P, W, _ = p.quadrature(nodes)
        r = eval_rho(domain, P)
        if np.any(r > 1e-9):
            raise GeometryError("divisor patch leaves the closed domain")
        # per-patch sums keep the result exactly linear in the multiplicities
        total += p.multiplicity * float(np.sum(np.abs(np.minimum(r, 0.0)) * W))
    return total


# ------------------------------------------------- mollified divisor current

class CurrentForm(Form11):
    """alpha_eps = pi sum_k n_k [X_k] * k_eps, the mollified current of a divisor.

    By Poincare-Lelong this is i ddbar of the mollified log|h| when X is the
    zero divisor of an entire h.  Complex lines use the closed form
    (i pi n / 2) b b^* m_eps(dist(z, L)); other patches use their quadrature.
    """

    def __init__(self, divisor: Divisor, moll: Mollifier, center=(0j, 0j), nodes: int = 48):
        self_lines = divisor.lines
        others = Divisor(tuple(p for p in divisor.patches if p.line is None))
        quad = others.quadrature(nodes) if others.patches else None
        p = np.asarray(center, dtype=complex)
        dists = [abs(np.dot(b, p) - c) / np.linalg.norm(b) for b, c, _ in self_lines]
        if quad is not None:
            dists.append(float(np.min(np.linalg.norm(quad[0] - p, axis=-1))))
        supp = max(0.0, min(dists) - moll.support) if dists else np.inf

        def coeffs(z):
            z = as_points(z)
            out = np.zeros(z.shape[:-1] + (2, 2), dtype=complex)
            for b, c, n in self_lines:
                nb = np.linalg.norm(b)
                bh = b / nb
                m = moll.marginal(np.abs(z @ bh - c / nb))
                out += (0.5j * np.pi * n) * m[..., None, None] * np.outer(bh, np.conj(bh))
            if quad is not None:
                P, W, N, M = quad
                flat = z.reshape(-1, 2)
                acc = np.zeros((len(flat), 2, 2), dtype=complex)
                NN = np.einsum("kj,kl->kjl", N, np.conj(N))
                for s in range(0, len(flat), 256):
                    d = np.linalg.norm(flat[s:s + 256, None, :] - P[None], axis=-1)
                    kw = moll.radial(d) * (W * M)[None, :]
                    acc[s:s + 256] = (0.5j * np.pi) * np.einsum("mk,kjl->mjl", kw, NN)
                out += acc.reshape(out.shape)
            return out

        super().__init__(coeffs, float(supp), "alpha_eps", tuple(p))
        object.__setattr__(self, "moll", moll)
        object.__setattr__(self, "line_data", self_lines)
        object.__setattr__(self, "has_patches", quad is not None)
        object.__setattr__(self, "_tables", {})

    def _J_table(self, b, c, reach):
        # J(l) = int_0^1 t m_eps(|t l - c'|) dt on a square grid in l, c' = c/|b| - bh . p
        key = (tuple(b), complex(c))
        tab = self._tables.get(key)
        if tab is not None and tab[0] >= reach:
            return tab
        moll = self.moll
        nb = np.linalg.norm(b)
        cp = c / nb - np.dot(b / nb, np.asarray(self.center))
        L = 1.05 * reach
        step = moll.epsilon / 32
        n = int(np.ceil(2 * L / step)) + 1
        ax = np.linspace(-L, L, n)
        lv = (ax[:, None] + 1j * ax[None, :]).ravel()
        J = np.zeros(len(lv))
        # integrand vanishes unless |t l - c'| < eps / 2: integrate over that t-interval
        a2 = np.abs(lv) ** 2
        bq = np.real(lv * np.conj(cp))
        disc = bq**2 - a2 * (abs(cp) ** 2 - moll.support**2)
        ok = (disc > 0) & (a2 > 0)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        a2s = np.where(a2 > 0, a2, 1.0)
        t0 = np.clip((bq - sq) / a2s, 0.0, 1.0)
        t1 = np.clip((bq + sq) / a2s, 0.0, 1.0)
        x, w = np.polynomial.legendre.leggauss(48)
        for xk, wk in zip(x, w):
            t = t0 + (t1 - t0) * (xk + 1) / 2
            J += wk * (t1 - t0) / 2 * t * moll.marginal(np.abs(t * lv - cp))
        J = np.where(ok, J, 0.0)
        if abs(cp) < moll.support:   # line meets the centre's support ball: l = 0 term
            J = np.where(a2 > 0, J, 0.5 * moll.marginal(abs(cp)))
        coef = ndimage.spline_filter(J.reshape(n, n), order=3, mode="nearest")
        tab = (L, ax[0], step, coef)
        self._tables[key] = tab
        return tab

    def rudin(self, z, nodes: int = RUDIN_MIN_NODES) -> np.ndarray:
        if nodes < RUDIN_MIN_NODES:
            raise ResolutionError(f"Rudin quadrature needs at least {RUDIN_MIN_NODES} nodes")
        z = as_points(z)
        p = np.asarray(self.center, dtype=complex)
        dz = z - p
        out = np.zeros(z.shape, dtype=complex)
        for b, c, n in self.line_data:
            bh = b / np.linalg.norm(b)
            lv = dz @ bh
            reach = max(1.0, float(np.max(np.abs(lv))) if lv.size else 1.0)
            L, lo, step, coef = self._J_table(b, c, reach)
            if np.max(np.abs(lv), initial=0.0) > L:
                L, lo, step, coef = self._J_table(b, c, 2 * reach)
            ci = np.stack([(lv.real - lo) / step, (lv.imag - lo) / step]).reshape(2, -1)
            J = ndimage.map_coordinates(coef, ci, order=3, mode="nearest", prefilter=False)
            J = J.reshape(lv.shape)
            out += (0.5j * np.pi * n) * (lv * J)[..., None] * np.conj(bh)
        if self.has_patches:
            generic = Form11(lambda x: self.coeffs(x) - self._line_coeffs(x), 0.0, "", self.center)
            out += Form11.rudin(generic, z, max(nodes, 128))
        return out

    def _line_coeffs(self, z):
        out = np.zeros(z.shape[:-1] + (2, 2), dtype=complex)
        for b, c, n in self.line_data:
            nb = np.linalg.norm(b)
            bh = b / nb
            m = self.moll.marginal(np.abs(z @ bh - c / nb))
            out += (0.5j * np.pi * n) * m[..., None, None] * np.outer(bh, np.conj(bh))
        return out


def mollified_current(divisor: Divisor, moll: Mollifier, center=(0j, 0j)) -> CurrentForm:
    return CurrentForm(divisor, moll, center)


# ------------------------------------------------------------- Nevanlinna

def _displace_zeros(h, grid: BoundaryGrid, x):
    hv = np.asarray(h(x))
    bad = hv == 0
    if bad.any():
        # move along J nu, tangent to the level set to first order
        log.info("%d grid nodes on zeros of h moved by 1e-6 spacing", int(bad.sum()))
        nu = grid.complex_normals[bad]
        x = x.copy()
        x[bad] = x[bad] + 1e-6 * grid.local_spacing[bad, None] * 1j * nu
    return x


@dataclass
class NevanlinnaNorm:
    levels: np.ndarray
    integrals: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(self.integrals))


def nevanlinna_norm(h: Callable, domain: ModelDomain, eps_list: Sequence[float],
                    resolution: int = 8) -> NevanlinnaNorm:
    """int over {rho = -eps} of |log|h|| dsigma, for each eps."""
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    if np.any(eps <= 0):
        raise PreconditionError("levels must be positive")
    vals = []
    for e in eps:
        G = build_boundary_grid(domain, eps=float(e), resolution=resolution)
        x = _displace_zeros(h, G, G.nodes)
        vals.append(float(np.abs(_log_abs(h, x)) @ G.weights))
    return NevanlinnaNorm(eps, np.array(vals))


@dataclass
class PipelineReport:
    blaschke: float
    type_integral: float
    base_point: np.ndarray
    epsilon: float
    levels: np.ndarray
    integrals_u: np.ndarray          # int |U_eps| over {rho = -s}
    integrals_log: np.ndarray        # int |log|h|| over {rho = -s}
    g_sup: np.ndarray                # sup |g_eps| per level
    threshold: float

    tol: float = 1e-9

    @property
    def ratio(self) -> float:
        v = self.integrals_u
        if np.max(v) <= self.tol:
            return 1.0
        return float(np.max(v) / np.min(v)) if np.min(v) > 0 else np.inf

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.integrals_u)) and self.ratio <= self.threshold)


def _type_gate(domain):
    f = domain.f_type
    d = 0.5 * min(1.0, float(np.sqrt(f.valid_radius)) if np.isfinite(f.valid_radius) else 1.0)
    fn = type_integral_complex if domain.setting == Setting.COMPLEX else type_integral_real
    r = fn(f, d)
    if r.divergent:
        raise PreconditionError("type integral of the domain diverges")
    return float(r.value)


def _zero_search(h: Callable, domain: ModelDomain, starts: int = 6, tol: float = 1e-8):
    """A zero of h in the domain found by local minimisation of |h|^2, or None."""
    V = build_volume_grid(domain, resolution=8)
    hv = np.abs(h(V.nodes))
    scale = max(float(hv.max()), 1e-300)

    def f(x):
        z = to_complex(x)[None, :]
        if _safe_rho(domain, z)[0] > 0:
            return 1e3
        return float(np.abs(h(z))[0] / scale) ** 2

    for i in np.argsort(hv, kind="stable")[:starts]:
        r = optimize.minimize(f, to_real(V.nodes[i]), method="Nelder-Mead",
                              options={"xatol": 1e-12, "fatol": 1e-24, "maxiter": 4000})
        if r.fun < tol**2:
            return to_complex(r.x)
    return None


def find_base_point(h: Callable, domain: ModelDomain, alpha: CurrentForm,
                    rng: np.random.Generator, tries: int = 2000):
    """A point p inside with h(p) != 0 and alpha_eps = 0 on a ball around p."""
    moll = alpha.moll
    cands = [np.asarray(domain.anchor, dtype=complex)]
    lo = -domain.diameter
    for _ in range(tries):
        cands.append(to_complex(rng.uniform(lo, -lo, size=4)))
    for p in cands:
        if _safe_rho(domain, p[None, :])[0] >= -1e-3:
            continue
        if np.abs(h(p[None, :]))[0] == 0:
            continue
        dist = [abs(np.dot(b, p) - c) / np.linalg.norm(b) for b, c, _ in alpha.line_data]
        if min(dist, default=np.inf) > 2 * moll.support:
            return p
    raise DataError("no base point away from the divisor support was found")


def nevanlinna_pipeline(h: Callable, divisor: Divisor, domain: ModelDomain,
                        epsilon: float = 0.2, s_list: Sequence[float] = (0.2, 0.1, 0.05, 0.025),
                        resolution: int = 16, vresolution: int = 8, level_resolution: int = 8,
                        threshold: float = 3.0, blaschke_budget: float = 1e3,
                        rng: Optional[np.random.Generator] = None,
                        rule: Optional[PatchRule] = None) -> PipelineReport:
    """U_eps = log|h| + u_eps - v_eps and its L1 norms over the level sets {rho = -s}.

    u_eps solves i ddbar u = alpha_eps by the Poincare-Lelong construction,
    v_eps is the mollified log|h| (h entire, no extension), so g_eps =
    u_eps - v_eps is pluriharmonic.  Bounded means max/min over s of the
    integrals stays within ``threshold``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    rule = PatchRule(radial_nodes=4, cos_nodes=3, azimuth=16) if rule is None else rule
    ti = _type_gate(domain)
    bl = blaschke_sum(divisor, domain)
    if not bl <= blaschke_budget:
        raise PreconditionError(f"Blaschke sum {bl:.3g} exceeds the budget {blaschke_budget:.3g}")
    moll = Mollifier(epsilon)
    if divisor.patches:
        P, _, _, _ = divisor.quadrature(16)
        hv = np.abs(h(P))
        if np.max(hv) > 1e-8 * (1 + np.max(np.abs(h(domain.anchor[None, :])))):
            raise DataError("divisor is not contained in the zero set of h")
        if len(divisor.lines) != len(divisor.patches):
            log.info("non-linear divisor patches use the slow quadrature path")
        alpha0 = mollified_current(divisor, moll)
        p = find_base_point(h, domain, alpha0, rng)
        alpha = mollified_current(divisor, moll, center=tuple(p))
        G = build_boundary_grid(domain, resolution=resolution)
        V = build_volume_grid(domain, resolution=vresolution)
        u = poincare_lelong_solve(alpha, domain, G, V, check=False, rule=rule)
    else:
        z0 = _zero_search(h, domain)
        if z0 is not None:
            raise DataError(f"h vanishes near {np.round(z0, 6)} but the divisor is empty")
        # alpha_eps = 0, so u_eps = 0 and U_eps = log|h| - v_eps
        p = np.asarray(domain.anchor, dtype=complex)
        u = lambda x: np.zeros(len(x))  # noqa: E731

    levels = np.asarray(sorted(s_list, reverse=True), dtype=float)
    grids, xs = [], []
    for s in levels:
        Gs = build_boundary_grid(domain, eps=float(s), resolution=level_resolution)
        grids.append(Gs)
        xs.append(_displace_zeros(h, Gs, Gs.nodes))
    X = np.concatenate(xs)
    uv = u(X)
    vv = mollify_log_modulus(h, moll, X)
    lh = _log_abs(h, X)
    Iu, Il, gs = [], [], []
    k = 0
    for Gs in grids:
        sl = slice(k, k + Gs.size)
        k += Gs.size
        g = uv[sl] - vv[sl]
        U = lh[sl] + g
        Iu.append(float(np.abs(U) @ Gs.weights))
        Il.append(float(np.abs(lh[sl]) @ Gs.weights))
        gs.append(float(np.max(np.abs(g))))
    return PipelineReport(bl, ti, p, epsilon, levels, np.array(Iu), np.array(Il), np.array(gs),
                          threshold)
