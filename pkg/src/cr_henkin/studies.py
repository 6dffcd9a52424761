"""Convergence and stability studies behind the command-line checks.

Every study returns a dataclass holding the raw numbers, a ``passed`` verdict
for its acceptance thresholds and ``rows()`` for CSV export.  All randomness
comes from the generator passed in, so a fixed seed gives identical output.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DataError, PreconditionError
from .geometry import ModelDomain, Setting, as_points, eval_rho, to_complex, to_real
from .grids import _default_center, _scale, build_boundary_grid, build_volume_grid, ray_roots
from .kernels import EstimateBatch, lemma22_batch, lemma23_batch, sample_admissible_pairs
from .lelong import (Divisor, Form11, PipelineReport, Potential, ddbar_fd_residuals,
                     nevanlinna_pipeline, poincare_lelong_solve, poly)
from .nearfield import PatchRule
from .operators import (DZB1, DZB1ZB2, Form01, PolyFormBasis, clear_operator_cache,
                        compatibility_check, dbar_b_solve, dbar_fd_residuals,
                        dbarb_stencil_residuals, henkin_solve, op_h_minus, op_h_plus,
                        random_exact_form, tangential_part)
from .profiles import exponential, monomial
from .type_analysis import (g_function, holder_modulus, make_holder_modulus, trace_curves,
                            type_integral_complex, type_integral_real)

log = logging.getLogger(__name__)

LIGHT_RULE = PatchRule(radial_nodes=4, cos_nodes=3, azimuth=16)
SMOOTH_FORMS = {"dzb1": DZB1, "dzb1zb2": DZB1ZB2}
POINT_HEADER = ["z_x1", "z_y1", "z_x2", "z_y2", "value_re", "value_im", "residual", "epsilon",
                "resolution"]


# ------------------------------------------------------------------ output

def fmt(v) -> str:
    """Shortest round-trip text of a number; the basis of byte-identical CSVs."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for r in rows:
            w.writerow([fmt(v) for v in r])


def point_rows(z, values, residuals, epsilon, resolution, prefix=()):
    x = to_real(np.atleast_2d(as_points(z)))
    values = np.broadcast_to(np.asarray(values, dtype=complex), (len(x),))
    residuals = np.broadcast_to(np.asarray(residuals, dtype=float), (len(x),))
    for i in range(len(x)):
        yield list(prefix) + list(x[i]) + [values[i].real, values[i].imag, residuals[i],
                                           float(epsilon), int(resolution)]


# ------------------------------------------------------------ test points

def interior_points(domain: ModelDomain, n: int, rng: np.random.Generator,
                    depth: float) -> np.ndarray:
    """n points with rho <= -depth.

    Random rays from the grid centre (in the domain's scaled coordinates),
    cut at the sublevel {rho = -depth} and sampled with radius r U^(1/4),
    which is uniform when the sublevel set is a ball.
    """
    c = _default_center(domain)
    if eval_rho(domain, c[None, :])[0] >= -depth:
        raise PreconditionError("depth exceeds the depth of the grid centre")
    v = rng.normal(size=(n, 4))
    v /= np.linalg.norm(v, axis=1)[:, None]
    d = to_complex(v) * _scale(domain)
    R = ray_roots(domain, c, d, -depth)
    return c + (R * rng.random(n) ** 0.25)[:, None] * d


# ---------------------------------------------------------------- dbar

@dataclass
class DbarLevel:
    resolution: int
    form: str
    points: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    seconds: float

    def fraction(self, tol: float) -> float:
        return float(np.mean(self.residuals <= tol))


@dataclass
class DbarStudy:
    domain: str
    levels: list
    tolerance: float
    fraction: float
    h: float

    @property
    def forms(self) -> list:
        return list(dict.fromkeys(lv.form for lv in self.levels))

    def of(self, form) -> list:
        return [lv for lv in self.levels if lv.form == form]

    def medians(self, form) -> np.ndarray:
        return np.array([np.median(lv.residuals) for lv in self.of(form)])

    def decreasing(self, form) -> bool:
        m = self.medians(form)
        return bool(len(m) >= 2 and np.all(np.diff(m) < 0))

    def form_passed(self, form) -> bool:
        top = self.of(form)[-1]
        return top.fraction(self.tolerance) >= self.fraction and self.decreasing(form)

    @property
    def passed(self) -> bool:
        return all(self.form_passed(f) for f in self.forms)

    def summary(self) -> list:
        return [[self.domain, lv.form, lv.resolution, float(np.max(lv.residuals)),
                 float(np.median(lv.residuals)), lv.fraction(self.tolerance)]
                for lv in self.levels]

    # wall times stay out of the CSVs so repeated runs are byte-identical
    summary_header = ["domain", "form", "resolution", "max_residual", "median_residual",
                      "fraction_within_tol"]

    def rows(self):
        for lv in self.levels:
            yield from point_rows(lv.points, lv.values, lv.residuals, 0.0, lv.resolution,
                                  (lv.form,))

    rows_header = ["form"] + POINT_HEADER


def dbar_study(domain: ModelDomain, resolutions: Sequence[int],
               forms: Sequence[str] = ("dzb1", "dzb1zb2"), n_points: int = 200,
               depth: float = 0.1, h: float = 1e-3, rng: Optional[np.random.Generator] = None,
               tolerance: float = 5e-2, fraction: float = 0.95,
               volume_resolutions: Optional[Sequence[int]] = None,
               volume_radial: Optional[Sequence[int]] = None) -> DbarStudy:
    """Henkin solutions of dbar u = phi on successive grids, checked by FD at interior points."""
    rng = np.random.default_rng(0) if rng is None else rng
    pts = interior_points(domain, n_points, rng, depth)
    vres = volume_resolutions or [8] * len(resolutions)
    vrad = volume_radial or [None] * len(resolutions)
    levels = []
    for n, nv, nr in zip(resolutions, vres, vrad):
        G = build_boundary_grid(domain, resolution=n)
        V = build_volume_grid(domain, resolution=nv, radial=nr)
        for name in forms:
            phi = SMOOTH_FORMS[name]
            t = time.perf_counter()
            u = henkin_solve(domain, G, V, phi)
            res = dbar_fd_residuals(u, phi, pts, h, domain)
            vals = u(pts)
            levels.append(DbarLevel(n, name, pts, vals, res, time.perf_counter() - t))
            log.info("dbar %s n=%d %s: max %.3g median %.3g", domain.name, n, name,
                     res.max(), np.median(res))
        clear_operator_cache()
    return DbarStudy(domain.name, levels, tolerance, fraction, h)


# ------------------------------------------------------- Poincare-Lelong

def shipped_potential() -> Potential:
    """w = chi(|z|^2) (|z1|^2 + |z1 z2|^2 / 2 + 0.15 (z1 zb2 + zb1 z2)), chi off (0.1, 0.9)."""
    q = poly([((1, 0, 1, 0), 1.0), ((1, 1, 1, 1), 0.5), ((1, 0, 0, 1), 0.15),
              ((0, 1, 1, 0), 0.15)])
    return Potential(q, cutoff=(0.1, 0.9))


@dataclass
class PLLevel:
    resolution: int
    volume_resolution: int
    radial: int
    residuals: np.ndarray      # relative to sup |alpha| over the points
    values: np.ndarray
    imag_max: float
    seconds: float


@dataclass
class PLStudy:
    points: np.ndarray
    levels: list
    tolerance: float
    h: float

    def medians(self) -> np.ndarray:
        return np.array([np.median(lv.residuals) for lv in self.levels])

    @property
    def decreasing(self) -> bool:
        m = self.medians()
        return bool(len(m) >= 2 and np.all(np.diff(m) < 0))

    @property
    def passed(self) -> bool:
        top = self.levels[-1]
        return bool(np.max(top.residuals) <= self.tolerance and self.decreasing
                    and all(lv.imag_max <= 1e-12 for lv in self.levels))

    def rows(self):
        for lv in self.levels:
            yield from point_rows(self.points, lv.values, lv.residuals, 0.0, lv.resolution)


def pl_study(alpha: Form11, domain: ModelDomain, levels: Sequence[tuple], n_points: int = 100,
             depth: float = 0.36, h: float = 1e-2, rng: Optional[np.random.Generator] = None,
             tolerance: float = 5e-2, rule: Optional[PatchRule] = None) -> PLStudy:
    """i ddbar u = alpha solved on grids (boundary, volume, radial) and checked by FD."""
    rng = np.random.default_rng(0) if rng is None else rng
    pts = interior_points(domain, n_points, rng, depth)
    scale = float(np.max(np.abs(alpha(pts))))
    if scale == 0:
        raise DataError("alpha vanishes at every test point")
    out = []
    for n, nv, nr in levels:
        t = time.perf_counter()
        G = build_boundary_grid(domain, resolution=n)
        V = build_volume_grid(domain, resolution=nv, radial=nr)
        u = poincare_lelong_solve(alpha, domain, G, V, rule=rule)
        res = ddbar_fd_residuals(u, alpha, pts, h) / scale
        vals = np.asarray(u(pts))
        out.append(PLLevel(n, nv, nr, res, vals, float(np.max(np.abs(np.imag(vals)))),
                           time.perf_counter() - t))
    return PLStudy(pts, out, tolerance, h)


# ------------------------------------------------------- dbar_b norms

@dataclass
class EvalSet:
    """A seeded subset of a coarse boundary grid with weights rescaled to the full area."""

    nodes: np.ndarray
    weights: np.ndarray
    resolution: int

    def lp(self, u, p: float) -> float:
        a = np.abs(np.asarray(u))
        if np.isinf(p):
            return float(a.max())
        return float(np.sum(a**p * self.weights) ** (1.0 / p))


def eval_set(domain, resolution: int, n: int, rng: np.random.Generator) -> EvalSet:
    E = build_boundary_grid(domain, resolution=resolution)
    if n >= E.size:
        return EvalSet(E.nodes, E.weights, resolution)
    idx = np.sort(rng.choice(E.size, n, replace=False))
    w = E.weights[idx] * (E.area / E.weights[idx].sum())
    return EvalSet(E.nodes[idx], w, resolution)


@dataclass
class NormStudy:
    resolutions: tuple
    eps: tuple
    p: tuple
    eps_ratios: np.ndarray     # (resolution, form, eps): ||u_eps||_1 / ||phi||_1
    p_ratios: np.ndarray       # (resolution, form, p):   ||T_b phi||_p / ||phi||_p
    compat: np.ndarray         # (resolution, form) compatibility residuals
    change: float
    zero: bool = False

    def maxima(self) -> tuple:
        return self.eps_ratios.max(axis=1), self.p_ratios.max(axis=1)

    def changes(self) -> np.ndarray:
        """Relative change of every max between the two top resolutions."""
        if len(self.resolutions) < 2:
            return np.zeros(0)
        me, mp = self.maxima()
        a = np.concatenate([me[-2], mp[-2]])
        b = np.concatenate([me[-1], mp[-1]])
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(np.maximum(a, b) > 0, np.abs(b - a) / np.maximum(a, b), 0.0)

    @property
    def passed(self) -> bool:
        me, mp = self.maxima()
        fin = np.all(np.isfinite(me)) and np.all(np.isfinite(mp))
        return bool(fin and np.all(self.changes() < self.change))

    summary_header = ["resolution", "quantity", "parameter", "max_ratio", "median_ratio"]

    def summary(self) -> list:
        out = []
        for i, n in enumerate(self.resolutions):
            for k, e in enumerate(self.eps):
                r = self.eps_ratios[i, :, k]
                out.append([n, "u_eps_L1", e, float(r.max()), float(np.median(r))])
            for k, p in enumerate(self.p):
                r = self.p_ratios[i, :, k]
                out.append([n, "Tb_Lp", p, float(r.max()), float(np.median(r))])
        return out

    rows_header = ["resolution", "form", "quantity", "parameter", "ratio", "compatibility"]

    def rows(self):
        for i, n in enumerate(self.resolutions):
            for j in range(self.eps_ratios.shape[1]):
                for k, e in enumerate(self.eps):
                    yield [n, j, "u_eps_L1", e, self.eps_ratios[i, j, k], self.compat[i, j]]
                for k, p in enumerate(self.p):
                    yield [n, j, "Tb_Lp", p, self.p_ratios[i, j, k], self.compat[i, j]]


def _ratio(a, b):
    return 0.0 if a == 0 and b == 0 else (a / b if b > 0 else np.inf)


def shaw_basis_values(domain, grid, basis: PolyFormBasis, z, eps: float,
                      rule: Optional[PatchRule] = None) -> np.ndarray:
    """(H+ - H-) of every basis form at the points z, regularised at eps; shape (R, M)."""
    return (op_h_plus(domain, grid, basis, z, eps, rule=rule)
            - op_h_minus(domain, grid, basis, z, eps, rule=rule))


def incompatible_form() -> Form01:
    """zb2 dzb1 - zb1 dzb2, which is not dbar-closed."""
    return Form01(lambda z: np.conj(as_points(z)[..., 1]), lambda z: -np.conj(as_points(z)[..., 0]),
                  "zb2 dzb1 - zb1 dzb2")


def norm_study(domain: ModelDomain, resolutions: Sequence[int],
               eps: Sequence[float] = (0.1, 0.05, 0.025),
               p: Sequence[float] = (1.0, 2.0, np.inf), n_forms: int = 20, degree: int = 3,
               rng: Optional[np.random.Generator] = None, eval_resolution: int = 8,
               eval_points: int = 128, rule: Optional[PatchRule] = LIGHT_RULE,
               change: float = 0.25, zero: bool = False, tol: float = 1e-6) -> NormStudy:
    """L^p ratios of the Shaw solution over random exact forms phi = dbar g.

    u_eps is H+ - H- at regularisation eps; T_b phi is its Richardson value
    from (min eps, min eps / 2).  The operators are linear, so they are applied
    once to a monomial basis and every phi is read off from its coefficients.
    Norms of phi use its tangential part phi(Lbar).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    ev = eval_set(domain, eval_resolution, eval_points, rng)
    basis = PolyFormBasis(max(degree - 1, 0))
    if zero:
        forms = [Form01.zero()]
    else:
        forms = [random_exact_form(rng, degree)[1] for _ in range(n_forms)]
    coef = np.array([np.zeros(len(basis)) if zero else basis.coefficients(f) for f in forms])
    ft = [tangential_part(domain, ev.nodes, f) for f in forms]
    eps = tuple(sorted(eps, reverse=True))
    e_min = eps[-1]
    R = np.empty((len(resolutions), len(forms), len(eps)))
    P = np.empty((len(resolutions), len(forms), len(p)))
    C = np.empty((len(resolutions), len(forms)))
    for i, n in enumerate(resolutions):
        G = build_boundary_grid(domain, resolution=n)
        for j, f in enumerate(forms):
            ref = np.sum(np.abs(tangential_part(domain, G.nodes, f)) * G.weights)
            C[i, j] = compatibility_check(G, f)
            if C[i, j] > tol * max(ref, 1.0):
                raise DataError(f"random form {j} fails the compatibility condition")
        vals = {}
        for e in eps + (e_min / 2,):
            if zero:
                vals[e] = np.zeros((len(basis), len(ev.nodes)), dtype=complex)
            else:
                vals[e] = shaw_basis_values(domain, G, basis, ev.nodes, e, rule)
        tb = 2 * vals[e_min / 2] - vals[e_min]
        for j in range(len(forms)):
            for k, p_ in enumerate(p):
                P[i, j, k] = _ratio(ev.lp(coef[j] @ tb, p_), ev.lp(ft[j], p_))
            for k, e in enumerate(eps):
                R[i, j, k] = _ratio(ev.lp(coef[j] @ vals[e], 1), ev.lp(ft[j], 1))
        log.info("dbar_b norms n=%d done", n)
        clear_operator_cache()
    return NormStudy(tuple(resolutions), eps, tuple(p), R, P, C, change, zero)


def check_incompatible(domain: ModelDomain, resolution: int, tol: float = 1e-6) -> float:
    """Raises DataError (through dbar_b_solve's gate) for the non-closed test form."""
    G = build_boundary_grid(domain, resolution=resolution)
    dbar_b_solve(domain, G, incompatible_form(), G.nodes[:1], 0.1, tol=tol)
    return compatibility_check(G, incompatible_form())


@dataclass
class TangentialProbe:
    points: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    eps: float
    resolution: int


def tangential_probe(domain: ModelDomain, resolution: int, n_points: int, eps: float,
                     rng: np.random.Generator, h: Optional[float] = None,
                     rule: Optional[PatchRule] = LIGHT_RULE) -> TangentialProbe:
    """Tangential FD residual of T_b phi for phi = dbar_b zb1, at random boundary nodes."""
    G = build_boundary_grid(domain, resolution=resolution)
    E = build_boundary_grid(domain, resolution=8)
    z = E.nodes[np.sort(rng.choice(E.size, n_points, replace=False))]
    h = float(np.median(G.local_spacing)) if h is None else h

    def u(x):
        return dbar_b_solve(domain, G, DZB1, x, eps, extrapolate=True, check=False, rule=rule)

    res = dbarb_stencil_residuals(domain, u, DZB1, z, h)
    return TangentialProbe(z, u(z), res, eps, resolution)


def lambda_probe(domain: ModelDomain, resolution: int, eps: float, n_curves: int,
                 rng: np.random.Generator, phi: Optional[Form01] = None,
                 rule: Optional[PatchRule] = LIGHT_RULE) -> float:
    """Lambda^f seminorm of T_b phi sampled along a few boundary curves.

    Only the nodes on the traced curves are evaluated; the sup part of the
    norm is taken over the same nodes.
    """
    G = build_boundary_grid(domain, resolution=resolution)
    phi = DZB1 if phi is None else phi
    curves = trace_curves(G, n_curves, rng)
    used = np.unique(np.concatenate(curves))
    vals = dbar_b_solve(domain, G, phi, G.nodes[used], eps, extrapolate=True, check=False,
                        rule=rule)
    pos = {int(k): i for i, k in enumerate(used)}
    mod = make_holder_modulus([domain.f_type], domain.setting)
    x = to_real(G.nodes)
    best = 0.0
    for path in curves:
        if len(path) < 2:
            continue
        t = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(x[path], axis=0), axis=1))])
        u0 = vals[pos[int(path[0])]]
        for tk, k in zip(t[1:], path[1:]):
            if 0 < tk <= 1.0:
                best = max(best, float(mod(1.0 / tk)) * abs(vals[pos[int(k)]] - u0))
    return float(np.max(np.abs(vals))) + best


# ----------------------------------------------------------------- lemmas

@dataclass
class LemmaStudy:
    lemma: int
    domain: str
    batch: EstimateBatch
    batch2: EstimateBatch
    factor: float

    @property
    def min_ratio(self) -> float:
        return self.batch.min_ratio()

    @property
    def min_ratio_double(self) -> float:
        return self.batch2.min_ratio()

    @property
    def passed(self) -> bool:
        a, b = self.min_ratio, self.min_ratio_double
        return bool(0 < a < np.inf and 0 < b < np.inf and max(a, b) / min(a, b) < self.factor)


def lemma_study(domain: ModelDomain, lemma: int, n: int, k: int = 1,
                rng: Optional[np.random.Generator] = None, factor: float = 2.0) -> LemmaStudy:
    """Min ratio lhs/rhs over n admissible pairs and over a fresh draw of 2n pairs."""
    rng = np.random.default_rng(0) if rng is None else rng
    if lemma not in (22, 23):
        raise PreconditionError("lemma is 22 or 23")
    fn = lemma22_batch if lemma == 22 else lemma23_batch
    want = Setting.COMPLEX if lemma == 22 else Setting.REAL
    if domain.setting != want:
        raise PreconditionError(f"this estimate needs the {want.value} setting")
    b1 = fn(domain, *sample_admissible_pairs(domain, n, rng), k)
    b2 = fn(domain, *sample_admissible_pairs(domain, 2 * n, rng), k)
    return LemmaStudy(lemma, domain.name, b1, b2, factor)


# ------------------------------------------------------------ type report

@dataclass
class TypeRow:
    kind: str
    param: float
    d: float
    value: float
    divergent: bool
    expected: float
    ok: bool

    def row(self):
        return [self.kind, self.param, self.d, self.value, self.divergent, self.expected,
                abs(self.value - self.expected) if np.isfinite(self.expected) else np.inf, self.ok]


TYPE_HEADER = ["kind", "param", "d", "value", "divergent", "expected", "abs_error", "ok"]


def type_report(exponential_alphas: Sequence[float], monomial_m: Sequence[float],
                d_list: Sequence[float] = (1.0, 0.25), s_list: Sequence[float] = (0.1, 0.01),
                type_tol: float = 1e-3, holder_tol: float = 1e-6) -> list:
    """Type integrals of exp(-1/t^alpha) and Hoelder data of t^m against closed forms.

    For F(t^2) = exp(-1/t^alpha): int_0^d |log F(t^2)| dt = d^(1-alpha) / (1-alpha)
    and, in the real setting, int_0^1 |log t log F(t^2)| dt = 1 / (1-alpha)^2,
    both finite exactly when alpha < 1.  For F(t) = t^m: f(1/d) = d^(-1/(2m)) / (2m)
    and G(s) = s^(1/(2m)).
    """
    if not exponential_alphas and not monomial_m:
        raise PreconditionError("empty family list")
    rows = []
    for a in exponential_alphas:
        f = exponential(a / 2)
        conv = a < 1
        r = type_integral_complex(f, 1.0)
        exp_c = 1 / (1 - a) if conv else np.inf
        ok = (r.divergent != conv) and (not conv or abs(r.value - exp_c) <= type_tol * max(1, exp_c))
        rows.append(TypeRow("type_complex", a, 1.0, r.value, r.divergent, exp_c, ok))
        r = type_integral_real(f, 1.0)
        exp_r = 1 / (1 - a) ** 2 if conv else np.inf
        ok = (r.divergent != conv) and (not conv or abs(r.value - exp_r) <= type_tol * max(1, exp_r))
        rows.append(TypeRow("type_real", a, 1.0, r.value, r.divergent, exp_r, ok))
    for m in monomial_m:
        f = monomial(m)
        for d in d_list:
            r = holder_modulus(f, Setting.COMPLEX, d)
            exp_h = d ** (-1 / (2 * m)) / (2 * m)
            rows.append(TypeRow("holder_monomial", m, d, r.value, r.divergent, exp_h,
                                abs(r.value - exp_h) <= holder_tol))
        for s in s_list:
            g = g_function([f], Setting.COMPLEX, s)
            exp_g = s ** (1 / (2 * m))
            rows.append(TypeRow("gain_monomial", m, s, g, False, exp_g,
                                abs(g - exp_g) <= 1e-9 * max(1, exp_g)))
    return rows


# ------------------------------------------------------------ Nevanlinna

NEVANLINNA_HEADER = ["s", "integral_U", "integral_log_h", "sup_g"]


def nevanlinna_rows(rep: PipelineReport):
    for s, iu, il, g in zip(rep.levels, rep.integrals_u, rep.integrals_log, rep.g_sup):
        yield [s, iu, il, g]


def nevanlinna_study(h: Callable, divisor: Divisor, domain: ModelDomain, **kw) -> PipelineReport:
    return nevanlinna_pipeline(h, divisor, domain, **kw)
