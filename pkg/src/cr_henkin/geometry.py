"""Model domains rho(z) = F(|z1|^2) + r(z) (or F(x1^2) + r(z)) in C^2.

Points are complex arrays of shape (..., 2).  Real 4-vectors use the
ordering (x1, y1, x2, y2).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import profiles
from .errors import GeometryError, OutOfChartError
from .profiles import FType


class Setting(str, Enum):
    COMPLEX = "complex"
    REAL = "real"


def as_points(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != 2:
        raise ValueError("points must have trailing dimension 2")
    return z


def to_real(z) -> np.ndarray:
    z = as_points(z)
    return np.stack([z[..., 0].real, z[..., 0].imag, z[..., 1].real, z[..., 1].imag], axis=-1)


def to_complex(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 0] + 1j * x[..., 1], x[..., 2] + 1j * x[..., 3]], axis=-1)


def wirtinger_to_real(g) -> np.ndarray:
    """Real gradient of a real function from its (d/dz1, d/dz2)."""
    g = np.asarray(g, dtype=complex)
    return np.stack([2 * g[..., 0].real, -2 * g[..., 0].imag,
                     2 * g[..., 1].real, -2 * g[..., 1].imag], axis=-1)


# ---------------------------------------------------------------- remainders

# coordinate selectors q(z) and their d/dz1, d/dz2
def _coord(name):
    if name == "z1":
        return (lambda z: np.abs(z[..., 0]) ** 2,
                lambda z: (np.conj(z[..., 0]), np.zeros_like(z[..., 0])))
    if name == "z2":
        return (lambda z: np.abs(z[..., 1]) ** 2,
                lambda z: (np.zeros_like(z[..., 0]), np.conj(z[..., 1])))
    if name in ("x1", "y1", "x2", "y2"):
        j = int(name[1]) - 1
        part = np.real if name[0] == "x" else np.imag
        # d(x^2)/dz = x,  d(y^2)/dz = -i y
        fac = 1.0 if name[0] == "x" else -1j

        def grad(z):
            v = fac * part(z[..., j])
            zero = np.zeros_like(z[..., 0])
            return (v, zero) if j == 0 else (zero, v)

        return (lambda z: part(z[..., j]) ** 2, grad)
    raise ValueError(f"unknown coordinate {name!r}")


@dataclass(frozen=True)
class ConvexRemainder:
    """Sum of profile terms P_k(q_k(z)) + tube term chi(y1) - level.

    ``terms`` pairs a coordinate name (z1, z2, x1, y1, x2, y2) with an FType
    applied to the square of that coordinate (|z2|^2, y1^2, ...).
    """

    terms: tuple = ()
    level: float = 1.0
    tube_delta: Optional[float] = None
    name: str = "custom"

    def eval(self, z) -> np.ndarray:
        z = as_points(z)
        out = np.full(z.shape[:-1], -self.level, dtype=float)
        for cname, prof in self.terms:
            q, _ = _coord(cname)
            out = out + prof.eval(q(z))
        if self.tube_delta is not None:
            out = out + np.maximum(0.0, np.abs(z[..., 0].imag) - self.tube_delta) ** 2
        return out

    def wirtinger_grad(self, z) -> np.ndarray:
        z = as_points(z)
        g1 = np.zeros(z.shape[:-1], dtype=complex)
        g2 = np.zeros(z.shape[:-1], dtype=complex)
        for cname, prof in self.terms:
            q, dq = _coord(cname)
            p1 = prof.d1(q(z))
            a, b = dq(z)
            g1 = g1 + p1 * a
            g2 = g2 + p1 * b
        if self.tube_delta is not None:
            y1 = z[..., 0].imag
            dchi = 2 * np.sign(y1) * np.maximum(0.0, np.abs(y1) - self.tube_delta)
            g1 = g1 + dchi / 2j
        return np.stack([g1, g2], axis=-1)

    def __call__(self, z):
        return self.eval(z)


# ------------------------------------------------------------------ domains

@dataclass(frozen=True)
class ModelDomain:
    """One chart of a model domain.

    The chart is w = A z + b with A fixing the z1 axis, so the model form
    survives the change of coordinates; ``p = A^-1(-b)`` is the distinguished
    boundary point sent to the origin.
    """

    setting: Setting
    f_type: FType
    remainder: ConvexRemainder
    chart_matrix: np.ndarray
    chart_shift: np.ndarray
    diameter: float
    delta: float
    anchor: np.ndarray = field(default_factory=lambda: np.zeros(2, complex))
    name: str = "custom"
    rho_nbhd: Optional[float] = None
    params: dict = field(default_factory=dict)
    # per-coordinate stretch used by grid builders for thin domains
    grid_scale: tuple = (1.0, 1.0)

    def __post_init__(self):
        A = np.asarray(self.chart_matrix, dtype=complex)
        b = np.asarray(self.chart_shift, dtype=complex)
        if (A.shape != (2, 2) or abs(A[0, 0] - 1) > 1e-14 or abs(A[0, 1]) > 1e-14
                or abs(b[0]) > 1e-14):
            raise GeometryError("chart must fix the z1 coordinate")
        object.__setattr__(self, "chart_matrix", A)
        object.__setattr__(self, "chart_shift", np.asarray(self.chart_shift, dtype=complex))
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=complex))
        if self.rho_nbhd is None:
            object.__setattr__(self, "rho_nbhd", 0.1 * self.diameter)

    # chart -------------------------------------------------------------
    @property
    def p(self) -> np.ndarray:
        return np.linalg.solve(self.chart_matrix, -self.chart_shift)

    def chart(self, z):
        return as_points(z) @ self.chart_matrix.T + self.chart_shift

    def chart_inv(self, w):
        return (as_points(w) - self.chart_shift) @ np.linalg.inv(self.chart_matrix).T

    def chart_remainder(self, w):
        """r_p(w) = rho(T^-1 w) - F(first coordinate term) in chart coordinates."""
        w = as_points(w)
        return eval_rho(self, self.chart_inv(w)) - self.f_type.eval(_profile_arg(self.setting, w))

    # convenience -------------------------------------------------------
    def rho(self, z):
        return eval_rho(self, z)

    def grad(self, z):
        return grad_rho(self, z)

    def profile_arg(self, z):
        return _profile_arg(self.setting, as_points(z))


def _profile_arg(setting, z):
    if setting == Setting.COMPLEX:
        return np.abs(z[..., 0]) ** 2
    return z[..., 0].real ** 2


def _check_chart(domain, z):
    if not np.all(np.isfinite(z)):
        raise OutOfChartError("non-finite point")
    tmax = domain.f_type.t_max
    if np.isfinite(tmax) and np.any(_profile_arg(domain.setting, z) >= tmax):
        raise OutOfChartError("point outside the validity radius of the profile")


def eval_rho(domain: ModelDomain, z) -> np.ndarray:
    """rho(z) = F(|z1|^2) + r(z)  or  F(x1^2) + r(z)."""
    z = as_points(z)
    _check_chart(domain, z)
    return domain.f_type.eval(_profile_arg(domain.setting, z)) + domain.remainder.eval(z)


def grad_rho(domain: ModelDomain, z) -> np.ndarray:
    """Wirtinger gradient (d rho/dz1, d rho/dz2), shape (..., 2)."""
    z = as_points(z)
    _check_chart(domain, z)
    F1 = domain.f_type.d1(_profile_arg(domain.setting, z))
    g = domain.remainder.wirtinger_grad(z)
    if domain.setting == Setting.COMPLEX:
        g[..., 0] += F1 * np.conj(z[..., 0])
    else:
        g[..., 0] += F1 * z[..., 0].real
    return g


def real_gradient(domain: ModelDomain, z) -> np.ndarray:
    return wirtinger_to_real(grad_rho(domain, z))


def outward_normal(domain: ModelDomain, z, tol: float = 1e-9) -> np.ndarray:
    """Unit outward normal in R^4 at a boundary point."""
    z = as_points(z)
    if np.any(np.abs(eval_rho(domain, z)) > tol):
        raise GeometryError("outward_normal needs a boundary point")
    return _unit_gradient(domain, z)


def _unit_gradient(domain, z):
    g = real_gradient(domain, z)
    nrm = np.linalg.norm(g, axis=-1, keepdims=True)
    if np.any(nrm < 1e-300):
        raise GeometryError("vanishing gradient: degenerate point")
    return g / nrm


def complex_normal(nu) -> np.ndarray:
    """R^4 unit vector -> complex pair (nu_x1 + i nu_y1, nu_x2 + i nu_y2)."""
    return to_complex(nu)


# ------------------------------------------------------------------ families

def _mk(setting, f, rem, diameter, delta, p, name, params, anchor=(0, 0), scale=(1.0, 1.0)):
    p = np.asarray(p, dtype=complex)
    return ModelDomain(Setting(setting), f, rem, np.eye(2, dtype=complex), -p,
                       diameter, delta, np.asarray(anchor, complex), name, None, params,
                       tuple(float(s) for s in scale))


def unit_ball(delta: float = 0.5) -> ModelDomain:
    rem = ConvexRemainder((("z2", profiles.monomial(1)),), 1.0, name="quadratic")
    return _mk("complex", profiles.monomial(1), rem, 2.0, delta, (0, 1), "ball", {})


def d_alpha(alpha: float = 0.5, delta: float = 0.5) -> ModelDomain:
    """{|z1|^2 + exp(1 + 2/alpha - |z2|^-alpha) < 1}."""
    if not 0 < alpha < 1:
        raise GeometryError("D_alpha needs 0 < alpha < 1")
    prof = profiles.exponential(alpha / 2, scale=np.exp(1 + 2 / alpha))
    rem = ConvexRemainder((("z2", prof),), 1.0, name="dalpha")
    r2 = (alpha / (alpha + 2)) ** (1 / alpha)
    return _mk("complex", profiles.monomial(1), rem, 2.0, delta, (0, r2), "dalpha",
               {"alpha": alpha, "z2_radius": r2}, scale=(1.0, r2))


def _exp_profile(alpha, unit=1.0):
    # exp(1 - |.|^-alpha), continued convexly past its inflection range, then
    # rescaled so that it reaches 1 at t = unit**2
    base = profiles.exponential(alpha / 2, scale=np.e, extend=True)
    t1 = profiles.f_inverse(base, 1.0)
    return profiles.rescaled(base, unit**2 / t1)


def om1(alpha1: float = 0.5, alpha2: float = 0.5, delta: float = 0.2,
        radius: float = 1.0) -> ModelDomain:
    """Complex-ellipsoid type: E1(|z1|^2) + E2(|z2|^2) < 1.

    Each E is exp(1 - |.|^-alpha) on its convexity range, continued by a cubic,
    and scaled so that the domain meets the coordinate axes at ``radius``.
    """
    F, G = _exp_profile(alpha1, radius), _exp_profile(alpha2, radius)
    rem = ConvexRemainder((("z2", G),), 1.0, name="om1")
    return _mk("complex", F, rem, 2 * radius, delta, (0, radius), "om1",
               {"alpha1": alpha1, "alpha2": alpha2, "radius": radius})


def om2(alpha1=0.5, beta1=0.5, alpha2=0.5, beta2=0.5, delta=0.2, radius=1.0) -> ModelDomain:
    """Real-ellipsoid type: sum of E(x_j^2) + E(y_j^2) < 1."""
    F = _exp_profile(alpha1, radius)
    rem = ConvexRemainder((("y1", _exp_profile(beta1, radius)),
                           ("x2", _exp_profile(alpha2, radius)),
                           ("y2", _exp_profile(beta2, radius))), 1.0, name="om2")
    return _mk("real", F, rem, 4 * radius, delta, (0, radius), "om2",
               {"alpha1": alpha1, "beta1": beta1, "alpha2": alpha2, "beta2": beta2,
                "radius": radius})


def om3(alpha1=0.5, beta1=0.5, alpha2=0.5, delta=0.2, radius=1.0) -> ModelDomain:
    """Mixed type: E(x1^2) + E(y1^2) + E(|z2|^2) < 1."""
    F = _exp_profile(alpha1, radius)
    rem = ConvexRemainder((("y1", _exp_profile(beta1, radius)),
                           ("z2", _exp_profile(alpha2, radius))), 1.0, name="om3")
    return _mk("real", F, rem, 4 * radius, delta, (0, radius), "om3",
               {"alpha1": alpha1, "beta1": beta1, "alpha2": alpha2, "radius": radius})


def om4(alpha1=0.5, delta=0.2, radius=1.0) -> ModelDomain:
    """Tube type: E(x1^2) + chi(y1) + |z2|^2 < 1 with chi(y1) = max(0, |y1| - delta)^2."""
    F = _exp_profile(alpha1, radius)
    rem = ConvexRemainder((("z2", profiles.monomial(1)),), 1.0, tube_delta=delta, name="om4")
    return _mk("real", F, rem, 2 * np.sqrt(radius**2 + (1 + delta) ** 2 + 1.0), delta,
               (0, 1), "om4", {"alpha1": alpha1, "radius": radius})


FAMILIES: dict = {
    "ball": unit_ball,
    "dalpha": d_alpha,
    "om1": om1,
    "om2": om2,
    "om3": om3,
    "om4": om4,
}


def make_domain(family: str, **params) -> ModelDomain:
    try:
        ctor = FAMILIES[family]
    except KeyError:
        raise GeometryError(f"unknown domain family {family!r}") from None
    return ctor(**params)
