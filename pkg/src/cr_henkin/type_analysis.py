"""Type integrals, f-Hoelder moduli, the gain function G and Lambda^f norms.

Every improper integral here is of the form int_0^d g(t) dt with the
difficulty at t = 0.  It is summed over dyadic shells [d 2^-(n+1), d 2^-n],
each integrated in the variable log t, and classified from the shell ratios.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

from .errors import DataError, PreconditionError, ResolutionError
from .geometry import Setting, to_real
from .profiles import FType

MAX_SHELLS = 1000           # d * 2^-1000 is still a normal double
MIN_SHELLS = 64             # log factors make early shells grow even for convergent sums
POWER_SHELLS = 256          # sub-geometric shells are classified from their power law here
POWER_MARGIN = 0.1          # c_n ~ n^-p counts as summable only for p > 1 + margin


@dataclass(frozen=True)
class Flagged:
    """An improper integral or a quantity derived from one."""

    value: float
    divergent: bool = False
    shells: int = 0

    def __float__(self):
        return float(self.value)


def _shell(fn, lo):
    # int_lo^{2 lo} fn(t) dt with t = lo 2^u
    ln2 = np.log(2.0)

    def g(u):
        t = lo * 2.0**u
        return float(fn(np.array(t))) * t * ln2

    val, _ = integrate.quad(g, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def dyadic_integral(fn: Callable, d: float, rtol: float = 1e-12,
                    max_shells: int = MAX_SHELLS) -> Flagged:
    """int_0^d fn(t) dt for fn >= 0 integrable or not at 0.

    Divergent when, after MIN_SHELLS shells, the last 5 shell contributions are
    non-decreasing.  Converged sums get the geometric tail estimate of the last
    ratio.  Shells still short of ``rtol`` after POWER_SHELLS whose ratios
    have crept up to 1 are fitted by c_n ~ C n^-p over the second half: summable with the integral
    tail when p > 1 + POWER_MARGIN, divergent otherwise (1/n, 1/(n log n)).
    """
    shells = []
    total, prev, ratios = 0.0, None, []
    for n in range(max_shells):
        lo = np.ldexp(d, -(n + 1))
        c = _shell(fn, lo)
        if not np.isfinite(c):
            return Flagged(np.inf, True, n + 1)
        total += c
        shells.append(c)
        if prev is not None and prev > 0:
            ratios.append(c / prev)
        prev = c
        if n >= 10:
            last = ratios[-5:]
            if n >= MIN_SHELLS and min(last) >= 1 - 1e-9:
                return Flagged(np.inf, True, n + 1)
            r = max(last)
            if r < 1:
                tail = c * r / (1 - r)
                if tail <= rtol * abs(total) or c == 0:
                    return Flagged(total + tail, False, n + 1)
        if n + 1 >= POWER_SHELLS and len(ratios) >= 5 and min(ratios[-5:]) > 0.99:
            return _power_tail(shells, total)
    return Flagged(np.inf, True, max_shells)


def _power_tail(shells, total) -> Flagged:
    c = np.asarray(shells)
    n = np.arange(1, len(c) + 1)
    half = slice(len(c) // 2, None)
    if np.any(c[half] <= 0):
        return Flagged(total, False, len(c))
    p = -np.polyfit(np.log(n[half]), np.log(c[half]), 1)[0]
    if p <= 1 + POWER_MARGIN:
        return Flagged(np.inf, True, len(c))
    # sum_{k > N} C k^-p ~ c_N N / (p - 1) - c_N / 2
    tail = c[-1] * (len(c) / (p - 1) - 0.5)
    return Flagged(total + tail, False, len(c))


def _log_f_sq(f: FType, t):
    lf = f.log(t * t)
    if np.any(np.isneginf(lf) & (t > 0)):
        raise DataError("F vanishes at t > 0: log F is not integrable")
    return np.abs(lf)


def type_integral_complex(f: FType, d: float) -> Flagged:
    """int_0^d |log F(t^2)| dt."""
    if not 0 < d < f.valid_radius:
        raise PreconditionError("need 0 < d < valid radius")
    return dyadic_integral(lambda t: _log_f_sq(f, t), d)


def type_integral_real(f: FType, d: float) -> Flagged:
    """int_0^d |log t * log F(t^2)| dt."""
    if not 0 < d < f.valid_radius:
        raise PreconditionError("need 0 < d < valid radius")
    return dyadic_integral(lambda t: np.abs(np.log(t)) * _log_f_sq(f, t), d)


def _gain(f: FType, setting: Setting, s):
    r = np.sqrt(f.inverse(s))
    if Setting(setting) == Setting.REAL:
        with np.errstate(divide="ignore"):
            return r * np.abs(np.log(r))
    return r


def g_function(f_list: Sequence[FType], setting, s: float) -> float:
    """G(s) = sup over the family of sqrt(F*(s)) (times |log sqrt(F*(s))| when real)."""
    return float(max(np.max(_gain(f, setting, s)) for f in f_list))


def _modulus_integral(f_list, setting, d):
    out = None
    for f in f_list:
        r = dyadic_integral(lambda t, f=f: _gain(f, setting, t) / t, d)
        if r.divergent:
            return r
        if out is None or r.value > out.value:
            out = r
    return out


def holder_modulus(f_list, setting, d: float) -> Flagged:
    """f(1/d) = inf_p (int_0^d sqrt(F_p*(t)) / t dt)^-1; value 0 (flagged) when divergent."""
    if isinstance(f_list, FType):
        f_list = [f_list]
    r = _modulus_integral(f_list, setting, d)
    if r.divergent:
        return Flagged(0.0, True, r.shells)
    return Flagged(1.0 / r.value, False, r.shells)


@dataclass(frozen=True)
class HolderModulus:
    f_eval: Callable       # x = 1/d  ->  f(x)
    g_eval: Callable       # s -> G(s)
    setting: Setting

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self.f_eval(x)
        x = np.asarray(x, dtype=float)
        return np.array([self.f_eval(v) for v in x.ravel()]).reshape(x.shape)


def make_holder_modulus(f_list, setting, t_min: float = 1e-6, t_max: float = 4.0,
                        points: int = 241) -> HolderModulus:
    """Tabulated modulus for repeated evaluation (log-log interpolation of the integral)."""
    if isinstance(f_list, FType):
        f_list = [f_list]
    setting = Setting(setting)
    ts = np.geomspace(t_min, t_max, points)
    head = _modulus_integral(f_list, setting, ts[0])
    g = lambda s: g_function(f_list, setting, s)  # noqa: E731
    if head.divergent:
        return HolderModulus(lambda x: 0.0, g, setting)
    acc = [head.value]
    for a, b in zip(ts[:-1], ts[1:]):
        # the sup over the family is taken per piece; exact for a single profile
        acc.append(acc[-1] + max(integrate.quad(lambda t, f=f: float(_gain(f, setting, t)) / t,
                                                a, b, epsrel=1e-12)[0] for f in f_list))
    li, lt = np.log(acc), np.log(ts)

    def fe(x):
        t = 1.0 / float(x)
        if not t_min <= t <= t_max:
            return float(holder_modulus(f_list, setting, t))
        return float(np.exp(-np.interp(np.log(t), lt, li)))

    return HolderModulus(fe, g, setting)


def power_modulus(beta: float) -> HolderModulus:
    """f(x) = x^beta (ordinary beta-Hoelder)."""
    return HolderModulus(lambda x: float(x) ** beta, lambda s: s**beta, Setting.COMPLEX)


def hardy_littlewood_modulus(g: Callable, s: float, samples: int = 200) -> Flagged:
    """(int_0^s G(t)/t dt)^-1 after sampling the hypotheses on G."""
    t = np.geomspace(s * 1e-12, s, samples)
    gv = np.array([float(g(x)) for x in t])
    if np.any(np.diff(gv) < -1e-14 * np.abs(gv[1:])):
        raise PreconditionError("G is not increasing")
    q = gv / t
    if np.any(np.diff(q) > 1e-12 * np.abs(q[:-1])):
        raise PreconditionError("G(t)/t is not decreasing")
    r = dyadic_integral(lambda x: float(g(float(x))) / float(x), s)
    if r.divergent:
        return Flagged(0.0, True, r.shells)
    return Flagged(1.0 / r.value, False, r.shells)


# ---------------------------------------------------------- Lambda^f norms

def trace_curves(grid, n_curves: int, rng: np.random.Generator, length: float = 1.0,
                 reach: float = 2.5) -> list:
    """Polylines through grid nodes that keep a roughly constant tangent direction.

    Each curve is an index array; the parameter along it is chord arclength,
    so |X'| = 1 holds exactly on the polyline.
    """
    x = to_real(grid.nodes)
    tree = cKDTree(x)
    nu = grid.normals
    h = float(np.median(grid.local_spacing))
    if h > length / 4:
        raise ResolutionError("grid too coarse for unit-length curves")
    curves = []
    for _ in range(n_curves):
        i = int(rng.integers(grid.size))
        d = rng.normal(size=4)
        d -= (d @ nu[i]) * nu[i]
        d /= np.linalg.norm(d)
        path, s = [i], 0.0
        while s < length:
            cand = np.array(tree.query_ball_point(x[i], reach * grid.local_spacing[i]))
            cand = cand[cand != i]
            if len(cand) == 0:
                break
            step = x[cand] - x[i]
            ln = np.linalg.norm(step, axis=1)
            cos = step @ d / ln
            j = int(np.argmax(cos - 0.1 * ln / ln.max()))
            if cos[j] < 0.7:
                break
            k = int(cand[j])
            s += float(ln[j])
            dn = step[j] - (step[j] @ nu[k]) * nu[k]
            d = dn / np.linalg.norm(dn)
            path.append(k)
            i = k
        curves.append(np.array(path))
    return curves


def lambda_f_norm(grid, u, modulus: HolderModulus, curve_samples: int,
                  rng: Optional[np.random.Generator] = None, length: float = 1.0) -> float:
    """||u||_inf + sup over sampled curves X and t of f(1/t) |u(X(t)) - u(X(0))|."""
    rng = np.random.default_rng(0) if rng is None else rng
    u = np.asarray(u)
    x = to_real(grid.nodes)
    best = 0.0
    cache: dict = {}
    for path in trace_curves(grid, curve_samples, rng, length):
        if len(path) < 2:
            continue
        t = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(x[path], axis=0), axis=1))])
        du = np.abs(u[path[1:]] - u[path[0]])
        for tk, dk in zip(t[1:], du):
            if dk == 0 or tk > length:
                continue
            key = round(float(tk), 12)
            fv = cache.get(key)
            if fv is None:
                fv = cache[key] = float(modulus(1.0 / tk))
            best = max(best, fv * float(dk))
    return float(np.max(np.abs(u))) + best
