"""Convexity profiles F and their inverses.

A profile is the one-variable function F in the model defining function
rho(z) = F(|z1|^2) + r(z) (complex setting) or F(x1^2) + r(z) (real setting).
Finite type 2m corresponds to F(t) = t^m, infinite type to F(t) = exp(-t^-a).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import RangeError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FType:
    """A profile with three derivatives and an optional closed-form inverse.

    ``valid_radius`` is the d-tilde of the profile: F is only trusted on
    [0, valid_radius**2).
    """

    eval: ArrayFn
    d1: ArrayFn
    d2: ArrayFn
    d3: ArrayFn
    valid_radius: float = np.inf
    name: str = "custom"
    params: dict = field(default_factory=dict)
    closed_inverse: Optional[ArrayFn] = None
    log_eval: Optional[ArrayFn] = None   # log F without underflow, when known

    def __call__(self, t):
        return self.eval(np.asarray(t, dtype=float))

    def log(self, t):
        t = np.asarray(t, dtype=float)
        if self.log_eval is not None:
            return self.log_eval(t)
        with np.errstate(divide="ignore"):
            return np.log(self.eval(t))

    def inverse(self, s):
        """F*(s); closed form when known, monotone root finding otherwise."""
        if self.closed_inverse is not None:
            s = np.asarray(s, dtype=float)
            if np.any(s < 0) or np.any(s > self.sup):
                raise RangeError(f"value outside the range of {self.name}")
            return self.closed_inverse(s)
        return f_inverse(self, s)

    @property
    def t_max(self) -> float:
        return float(self.valid_radius) ** 2

    @property
    def sup(self) -> float:
        if np.isfinite(self.t_max):
            return float(self.eval(np.array(self.t_max)))
        return np.inf


def monomial(m: float) -> FType:
    m = float(m)

    def ev(t):
        return np.power(t, m)

    def d1(t):
        return m * np.power(t, m - 1) if m != 1 else np.ones_like(t)

    def d2(t):
        if m in (1.0,):
            return np.zeros_like(t)
        if m == 2:
            return np.full_like(t, 2.0)
        return m * (m - 1) * np.power(t, m - 2)

    def d3(t):
        if m in (1.0, 2.0):
            return np.zeros_like(t)
        if m == 3:
            return np.full_like(t, 6.0)
        return m * (m - 1) * (m - 2) * np.power(t, m - 3)

    def lg(t):
        with np.errstate(divide="ignore"):
            return m * np.log(t)

    return FType(ev, d1, d2, d3, name="monomial", params={"m": m},
                 closed_inverse=lambda s: np.power(s, 1.0 / m), log_eval=lg)


def _exp_core(a, scale):
    # F = scale * exp(g), g = -t^-a
    def parts(t):
        t = np.asarray(t, dtype=float)
        pos = t > 0
        ts = np.where(pos, t, 1.0)
        x = ts ** (-a)
        with np.errstate(under="ignore", over="ignore"):
            F = np.where(pos, scale * np.exp(-x), 0.0)
        g1 = a * x / ts
        g2 = -a * (a + 1) * x / ts**2
        g3 = a * (a + 1) * (a + 2) * x / ts**3
        return pos, F, g1, g2, g3

    def ev(t):
        return parts(t)[1]

    def d1(t):
        pos, F, g1, _, _ = parts(t)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.where(pos & (F > 0), g1 * F, 0.0)

    def d2(t):
        pos, F, g1, g2, _ = parts(t)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.where(pos & (F > 0), (g2 + g1**2) * F, 0.0)

    def d3(t):
        pos, F, g1, g2, g3 = parts(t)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.where(pos & (F > 0), (g3 + 3 * g1 * g2 + g1**3) * F, 0.0)

    return ev, d1, d2, d3


def exponential_convex_limit(a: float) -> float:
    """Largest t with F''' >= 0 for F(t) = exp(-t^-a).

    With x = t^-a the sign of F''' is that of
    a^2 x^2 - 3a(a+1) x + (a+1)(a+2); F', F'' and (F/t)' are already
    nonnegative wherever this is.
    """
    A, B, C = a * a, -3 * a * (a + 1), (a + 1) * (a + 2)
    x = (-B + np.sqrt(B * B - 4 * A * C)) / (2 * A)
    return float(x ** (-1.0 / a))


def exponential(a: float, scale: float = 1.0, extend: bool = False,
                valid_radius: float = np.inf) -> FType:
    """F(t) = scale * exp(-t^-a).

    With ``extend`` the profile is continued past the last point where all
    derivative conditions hold by its cubic Taylor polynomial there, which
    keeps F', F'', F''' and (F/t)' nonnegative on [0, inf).  Note the
    exponent convention: exp(-1/|z1|^alpha) is ``exponential(alpha / 2)``.
    """
    a = float(a)
    ev, d1, d2, d3 = _exp_core(a, scale)
    params = {"a": a, "scale": scale, "extend": extend}

    def lg_core(t):
        with np.errstate(divide="ignore"):
            return np.where(t > 0, np.log(scale) - np.where(t > 0, t, 1.0) ** (-a), -np.inf)

    if not extend:
        def inv(s):
            s = np.asarray(s, dtype=float)
            with np.errstate(divide="ignore"):
                return np.where(s > 0, np.log(scale / np.where(s > 0, s, 1.0)) ** (-1.0 / a), 0.0)
        return FType(ev, d1, d2, d3, valid_radius=valid_radius, name="exponential",
                     params=params, closed_inverse=inv, log_eval=lg_core)

    t0 = 0.999 * exponential_convex_limit(a)
    c0, c1, c2, c3 = (float(f(np.array(t0))) for f in (ev, d1, d2, d3))
    params["t_ext"] = t0

    def e_ev(t):
        t = np.asarray(t, dtype=float)
        u = t - t0
        return np.where(t <= t0, ev(np.minimum(t, t0)), c0 + c1 * u + c2 * u**2 / 2 + c3 * u**3 / 6)

    def e_d1(t):
        t = np.asarray(t, dtype=float)
        u = t - t0
        return np.where(t <= t0, d1(np.minimum(t, t0)), c1 + c2 * u + c3 * u**2 / 2)

    def e_d2(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= t0, d2(np.minimum(t, t0)), c2 + c3 * (t - t0))

    def e_d3(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= t0, d3(np.minimum(t, t0)), c3)

    def e_lg(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= t0, lg_core(np.minimum(t, t0)), np.log(np.maximum(e_ev(t), 1e-300)))

    return FType(e_ev, e_d1, e_d2, e_d3, valid_radius=valid_radius,
                 name="exponential", params=params, log_eval=e_lg)


def rescaled(f: FType, c: float) -> FType:
    """t -> F(t / c); keeps every sign condition of F."""
    c = float(c)
    inv = lg = None
    if f.closed_inverse is not None:
        inv = lambda s: c * f.closed_inverse(s)  # noqa: E731
    if f.log_eval is not None:
        lg = lambda t: f.log_eval(np.asarray(t) / c)  # noqa: E731
    return FType(lambda t: f.eval(np.asarray(t) / c),
                 lambda t: f.d1(np.asarray(t) / c) / c,
                 lambda t: f.d2(np.asarray(t) / c) / c**2,
                 lambda t: f.d3(np.asarray(t) / c) / c**3,
                 f.valid_radius * np.sqrt(c), f.name, {**f.params, "rescale": c}, inv, lg)


def table(t_samples, f_samples) -> FType:
    """Monotone PCHIP profile through sampled values (first sample must be (0, 0))."""
    t_samples = np.asarray(t_samples, dtype=float)
    f_samples = np.asarray(f_samples, dtype=float)
    p = PchipInterpolator(t_samples, f_samples, extrapolate=False)
    dp = [p.derivative(k) for k in (1, 2, 3)]

    def wrap(fn):
        return lambda t: np.nan_to_num(fn(np.asarray(t, dtype=float)))

    return FType(wrap(p), wrap(dp[0]), wrap(dp[1]), wrap(dp[2]),
                 valid_radius=float(np.sqrt(t_samples[-1])), name="table",
                 params={"n": len(t_samples)})


def negated(f: FType) -> FType:
    """-F; useful only as a counterexample for the condition checker."""
    return FType(lambda t: -f.eval(t), lambda t: -f.d1(t), lambda t: -f.d2(t),
                 lambda t: -f.d3(t), f.valid_radius, "neg-" + f.name, dict(f.params))


def f_inverse(f: FType, s, rtol: float = 1e-12, t_hi: Optional[float] = None):
    """Invert a nondecreasing profile by bracketed bisection + Newton.

    Works elementwise on arrays.  Raises RangeError when s lies outside
    [0, sup F] on the valid interval.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0) or np.any(~np.isfinite(s_arr)):
        raise RangeError("negative or non-finite value has no preimage")
    hi = t_hi if t_hi is not None else (f.t_max if np.isfinite(f.t_max) else 1.0)
    if not np.isfinite(f.t_max):
        while np.any(f.eval(np.array(hi)) < s_arr) and hi < 1e300:
            hi *= 2.0
    if np.any(f.eval(np.array(hi)) < s_arr * (1 - 1e-15)):
        raise RangeError(f"value above the range of {f.name}")

    lo_b = np.zeros_like(s_arr)
    hi_b = np.full_like(s_arr, hi)
    t = 0.5 * (lo_b + hi_b)
    for _ in range(400):
        val = f.eval(t) - s_arr
        lo_b = np.where(val < 0, t, lo_b)
        hi_b = np.where(val >= 0, t, hi_b)
        d = f.d1(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - val / d
        ok = np.isfinite(tn) & (tn > lo_b) & (tn < hi_b)
        tn = np.where(ok, tn, 0.5 * (lo_b + hi_b))
        if np.all(np.abs(tn - t) <= rtol * np.maximum(np.abs(tn), 1e-300)):
            t = tn
            break
        t = tn
    t = np.where(s_arr == 0, 0.0, t)
    return t if np.ndim(s) else float(t[0])


@dataclass
class ConditionReport:
    passed: bool
    conditions: dict
    worst_sample: Optional[float]
    first_violation: Optional[str]


def check_f_conditions(f: FType, samples: int, t_max: Optional[float] = None,
                       tol: float = 0.0) -> ConditionReport:
    """Sample F(0)=0 and the signs of F', F'', F''', (F/t)' on a log grid."""
    if samples < 2:
        raise ValueError("need at least two samples")
    top = t_max if t_max is not None else (f.t_max if np.isfinite(f.t_max) else 1.0)
    t = np.geomspace(top * 1e-8, top, samples, endpoint=False)
    F, F1 = f.eval(t), f.d1(t)
    checks = {
        "F(0)=0": np.array([abs(float(f.eval(np.array(0.0))))]) <= tol,
        "F'>=0": F1 >= -tol,
        "F''>=0": f.d2(t) >= -tol,
        "F'''>=0": f.d3(t) >= -tol,
        "(F/t)'>=0": (t * F1 - F) / t**2 >= -tol,
    }
    conditions = {k: bool(np.all(v)) for k, v in checks.items()}
    first, worst = None, None
    for k, v in checks.items():
        if not np.all(v):
            first = k
            worst = 0.0 if k == "F(0)=0" else float(t[np.argmin(v)])
            break
    return ConditionReport(all(conditions.values()), conditions, worst, first)
