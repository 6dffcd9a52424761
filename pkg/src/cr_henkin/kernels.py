"""Support function, Henkin kernel and the sampled support-function estimates."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import PreconditionError, SingularityError, UnsupportedSettingError
from .geometry import ModelDomain, Setting, as_points, eval_rho, grad_rho, to_real


def support_phi(domain: ModelDomain, zeta, z) -> np.ndarray:
    """Phi(zeta, z) = sum_j d rho(zeta)/d zeta_j (zeta_j - z_j)."""
    zeta, z = as_points(zeta), as_points(z)
    g = grad_rho(domain, zeta)
    return np.sum(g * (zeta - z), axis=-1)


def re_phi_lower_bound(domain: ModelDomain, zeta, z) -> np.ndarray:
    """Right-hand side of the convexity bound for 2 Re Phi (complex setting)."""
    if domain.setting != Setting.COMPLEX:
        raise UnsupportedSettingError("the Re Phi bound is stated for the complex setting")
    zeta, z = as_points(zeta), as_points(z)
    F = domain.f_type
    tz, tw = np.abs(z[..., 0]) ** 2, np.abs(zeta[..., 0]) ** 2
    d1 = F.d1(tw)
    return (eval_rho(domain, zeta) - eval_rho(domain, z)
            + d1 * np.abs(z[..., 0] - zeta[..., 0]) ** 2 + bracket_term(domain, zeta, z))


def bracket_term(domain: ModelDomain, zeta, z) -> np.ndarray:
    """F(|z1|^2) - F(|zeta1|^2) - F'(|zeta1|^2)(|z1|^2 - |zeta1|^2) >= 0 for convex F."""
    zeta, z = as_points(zeta), as_points(z)
    F = domain.f_type
    tz, tw = np.abs(z[..., 0]) ** 2, np.abs(zeta[..., 0]) ** 2
    return F.eval(tz) - F.eval(tw) - F.d1(tw) * (tz - tw)


def henkin_kernel(g, zeta, z):
    """The kernel with first-slot gradient ``g`` supplied (no checks)."""
    d = zeta - z
    num = g[..., 0] * np.conj(d[..., 1]) - g[..., 1] * np.conj(d[..., 0])
    phi = np.sum(g * d, axis=-1)
    return num / (phi * np.sum(np.abs(d) ** 2, axis=-1))


def kernel_h(domain: ModelDomain, zeta, z, tol: float = 1e-300) -> np.ndarray:
    """H(zeta, z) = [r_1 (conj zeta_2 - conj z_2) - r_2 (conj zeta_1 - conj z_1)] / (Phi |zeta - z|^2)."""
    zeta, z = np.broadcast_arrays(as_points(zeta), as_points(z))
    dist = np.sqrt(np.sum(np.abs(zeta - z) ** 2, axis=-1))
    if np.any(dist <= tol):
        raise SingularityError("kernel evaluated on the diagonal zeta = z", float(dist.min()))
    g = grad_rho(domain, zeta)
    phi = np.sum(g * (zeta - z), axis=-1)
    bad = np.abs(phi) <= tol
    if np.any(bad):
        raise SingularityError("support function vanishes", float(dist[bad].min()))
    return henkin_kernel(g, zeta, z)


# ---------------------------------------------------------- lemma sampling

class Branch(str, Enum):
    NEAR = "near"   # |zeta_1| >= |z_1 - zeta_1|  (or |xi_1| >= |x_1 - xi_1|)
    FAR = "far"


@dataclass
class EstimateSample:
    zeta: np.ndarray
    z: np.ndarray
    k: int
    lhs: float
    rhs: float
    ratio: float
    branch: Branch


@dataclass
class EstimateBatch:
    """Vectorised lemma evaluations; ``ratio`` is +inf where rhs = 0."""

    zeta: np.ndarray
    z: np.ndarray
    k: int
    lhs: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray
    near: np.ndarray

    def __len__(self):
        return len(self.lhs)

    def min_ratio(self) -> float:
        fin = np.isfinite(self.ratio)
        return float(self.ratio[fin].min()) if fin.any() else np.inf

    def sample(self, i: int) -> EstimateSample:
        return EstimateSample(self.zeta[i], self.z[i], self.k, float(self.lhs[i]),
                              float(self.rhs[i]), float(self.ratio[i]),
                              Branch.NEAR if self.near[i] else Branch.FAR)


def _check_lemma_pre(domain, zeta, z, k, setting):
    if domain.setting != setting:
        raise PreconditionError(f"this estimate needs the {setting.value} setting")
    if k not in (1, 2):
        raise PreconditionError("k must be 1 or 2")
    if abs(float(domain.f_type.d1(np.array(0.0)))) > 1e-14:
        raise PreconditionError("F'(0) != 0: strictly convex profile, lemma not applicable")
    if np.any(np.sum(np.abs(zeta - z) ** 2, axis=-1) == 0):
        raise PreconditionError("zeta must differ from z")


def _lemma_common(domain, zeta, z):
    drho = eval_rho(domain, zeta) - eval_rho(domain, z)
    if np.any(drho < 0):
        raise PreconditionError("need rho(zeta) - rho(z) >= 0")
    phi = support_phi(domain, zeta, z)
    lhs_base = np.abs(phi)
    dist = np.sqrt(np.sum(np.abs(zeta - z) ** 2, axis=-1))
    return drho, phi, lhs_base, dist


def _ratio(lhs, rhs):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.inf)


def lemma22_batch(domain: ModelDomain, zeta, z, k: int) -> EstimateBatch:
    zeta, z = np.broadcast_arrays(np.atleast_2d(as_points(zeta)), np.atleast_2d(as_points(z)))
    _check_lemma_pre(domain, zeta, z, k, Setting.COMPLEX)
    drho, phi, aphi, dist = _lemma_common(domain, zeta, z)
    F = domain.f_type
    w1, z1 = zeta[:, 0], z[:, 0]
    a = np.abs(phi.imag) + drho
    near = np.abs(w1) >= np.abs(z1 - w1)
    r_near = (a + F.eval(np.abs(z1 - w1) ** 2)) ** k * np.abs(z1 - w1)
    r_far = ((a + F.eval(0.5 * np.abs(w1) ** 2)) ** k * np.abs(w1)
             + (a + F.eval(0.5 * np.abs(z1) ** 2)) ** k * np.abs(z1))
    rhs = np.where(near, r_near, r_far)
    lhs = aphi**k * dist
    return EstimateBatch(zeta, z, k, lhs, rhs, _ratio(lhs, rhs), near)


def lemma23_batch(domain: ModelDomain, zeta, z, k: int) -> EstimateBatch:
    zeta, z = np.broadcast_arrays(np.atleast_2d(as_points(zeta)), np.atleast_2d(as_points(z)))
    _check_lemma_pre(domain, zeta, z, k, Setting.REAL)
    drho, phi, aphi, dist = _lemma_common(domain, zeta, z)
    F = domain.f_type
    xi, eta = zeta[:, 0].real, zeta[:, 0].imag
    x, y = z[:, 0].real, z[:, 0].imag
    dy = np.abs(y - eta)
    a = np.abs(phi.imag) + drho
    near = np.abs(xi) >= np.abs(x - xi)
    # first bullet read with balanced brackets, as in the complex case
    r_near = (a + F.eval((x - xi) ** 2)) ** k * (np.abs(x - xi) + dy)
    r_far = ((a + F.eval(0.5 * xi**2)) ** k * (np.abs(xi) + dy)
             + (a + F.eval(0.5 * x**2)) ** k * (np.abs(x) + dy))
    rhs = np.where(near, r_near, r_far)
    lhs = aphi**k * dist
    return EstimateBatch(zeta, z, k, lhs, rhs, _ratio(lhs, rhs), near)


def lemma22_check(domain: ModelDomain, zeta, z, k: int) -> EstimateSample:
    return lemma22_batch(domain, zeta, z, k).sample(0)


def lemma23_check(domain: ModelDomain, zeta, z, k: int) -> EstimateSample:
    return lemma23_batch(domain, zeta, z, k).sample(0)


def sample_near_boundary(domain: ModelDomain, n: int, rng: np.random.Generator,
                         radius: Optional[float] = None, batch: int = 4096) -> np.ndarray:
    """Points within ``radius`` (default delta) of p with |rho| <= rho_nbhd."""
    radius = domain.delta if radius is None else radius
    p = domain.p
    out = []
    have = 0
    for _ in range(10_000):
        v = rng.normal(size=(batch, 4))
        v *= (radius * rng.random(batch) ** 0.25 / np.linalg.norm(v, axis=1))[:, None]
        pts = p + np.stack([v[:, 0] + 1j * v[:, 1], v[:, 2] + 1j * v[:, 3]], axis=-1)
        pts = pts[np.abs(eval_rho(domain, pts)) <= domain.rho_nbhd]
        out.append(pts)
        have += len(pts)
        if have >= n:
            break
    else:
        raise PreconditionError("neighbourhood sampling found too few points")
    return np.concatenate(out)[:n]


def sample_admissible_pairs(domain: ModelDomain, n: int, rng: np.random.Generator,
                            radius: Optional[float] = None):
    """Rejection-sample (zeta, z) pairs with rho(zeta) >= rho(z)."""
    zs, ws = [], []
    have = 0
    while have < n:
        a = sample_near_boundary(domain, n, rng, radius)
        b = sample_near_boundary(domain, n, rng, radius)
        keep = eval_rho(domain, a) >= eval_rho(domain, b)
        keep &= np.any(a != b, axis=-1)
        ws.append(a[keep])
        zs.append(b[keep])
        have += int(keep.sum())
    return np.concatenate(ws)[:n], np.concatenate(zs)[:n]


def lemma_scan(domain: ModelDomain, n: int, k: int, rng: np.random.Generator,
               radius: Optional[float] = None) -> EstimateBatch:
    zeta, z = sample_admissible_pairs(domain, n, rng, radius)
    fn = lemma22_batch if domain.setting == Setting.COMPLEX else lemma23_batch
    return fn(domain, zeta, z, k)


def export_samples_csv(batch: EstimateBatch, path) -> None:
    """Columns: zeta(4), z(4), k, branch, lhs, rhs, ratio."""
    zr, wr = to_real(batch.zeta), to_real(batch.z)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zeta_x1", "zeta_y1", "zeta_x2", "zeta_y2", "z_x1", "z_y1", "z_x2", "z_y2",
                    "k", "branch", "lhs", "rhs", "ratio"])
        for i in range(len(batch)):
            w.writerow([repr(float(v)) for v in zr[i]] + [repr(float(v)) for v in wr[i]]
                       + [batch.k, "near" if batch.near[i] else "far",
                          repr(float(batch.lhs[i])), repr(float(batch.rhs[i])),
                          repr(float(batch.ratio[i]))])
