"""Dense kernel sums, the O(M*N) loops behind every boundary operator.

For points a, b in C^2 and g = d rho(a) the Henkin-type kernel is

    k(a, g; b) = [g1 (conj(a2) - conj(b2)) - g2 (conj(a1) - conj(b1))]
                 / ( (g1 (a1 - b1) + g2 (a2 - b2)) |a - b|^2 ).

``source_first`` sums  q_i k(zeta_i, g_i; z_m)  over sources i (H and H+),
``target_first`` sums  q_i k(x_m, gx_m; zeta_i)  (H-, first slot off the
boundary).  Each target accumulates its sources in index order, so results
do not depend on the thread count.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit, prange


@njit(fastmath=False, parallel=True)
def _source_first_nb(src, g, q, tgt, out):
    M = tgt.shape[0]
    N = src.shape[0]
    for m in prange(M):
        z1 = tgt[m, 0]
        z2 = tgt[m, 1]
        acc = 0j
        for i in range(N):
            d1 = src[i, 0] - z1
            d2 = src[i, 1] - z2
            r2 = d1.real * d1.real + d1.imag * d1.imag + d2.real * d2.real + d2.imag * d2.imag
            phi = g[i, 0] * d1 + g[i, 1] * d2
            num = g[i, 0] * d2.conjugate() - g[i, 1] * d1.conjugate()
            acc += q[i] * num / (phi * r2)
        out[m] = acc


@njit(fastmath=False, parallel=True)
def _target_first_nb(src, q, tgt, gt, out):
    M = tgt.shape[0]
    N = src.shape[0]
    for m in prange(M):
        x1 = tgt[m, 0]
        x2 = tgt[m, 1]
        h1 = gt[m, 0]
        h2 = gt[m, 1]
        acc = 0j
        for i in range(N):
            d1 = x1 - src[i, 0]
            d2 = x2 - src[i, 1]
            r2 = d1.real * d1.real + d1.imag * d1.imag + d2.real * d2.real + d2.imag * d2.imag
            phi = h1 * d1 + h2 * d2
            num = h1 * d2.conjugate() - h2 * d1.conjugate()
            acc += q[i] * num / (phi * r2)
        out[m] = acc


@njit(fastmath=False, parallel=True)
def _source_first_multi_nb(src, g, Q, tgt, out):
    # Q (R, N) charges, out (R, M): one kernel evaluation serves every row
    M = tgt.shape[0]
    N = src.shape[0]
    R = Q.shape[0]
    for m in prange(M):
        z1 = tgt[m, 0]
        z2 = tgt[m, 1]
        acc = np.zeros(R, dtype=np.complex128)
        for i in range(N):
            d1 = src[i, 0] - z1
            d2 = src[i, 1] - z2
            r2 = d1.real * d1.real + d1.imag * d1.imag + d2.real * d2.real + d2.imag * d2.imag
            phi = g[i, 0] * d1 + g[i, 1] * d2
            k = (g[i, 0] * d2.conjugate() - g[i, 1] * d1.conjugate()) / (phi * r2)
            for r in range(R):
                acc[r] += Q[r, i] * k
        for r in range(R):
            out[r, m] = acc[r]


@njit(fastmath=False, parallel=True)
def _target_first_multi_nb(src, Q, tgt, gt, out):
    M = tgt.shape[0]
    N = src.shape[0]
    R = Q.shape[0]
    for m in prange(M):
        x1 = tgt[m, 0]
        x2 = tgt[m, 1]
        h1 = gt[m, 0]
        h2 = gt[m, 1]
        acc = np.zeros(R, dtype=np.complex128)
        for i in range(N):
            d1 = x1 - src[i, 0]
            d2 = x2 - src[i, 1]
            r2 = d1.real * d1.real + d1.imag * d1.imag + d2.real * d2.real + d2.imag * d2.imag
            phi = h1 * d1 + h2 * d2
            k = (h1 * d2.conjugate() - h2 * d1.conjugate()) / (phi * r2)
            for r in range(R):
                acc[r] += Q[r, i] * k
        for r in range(R):
            out[r, m] = acc[r]


@njit(fastmath=False, parallel=True)
def _poly_table_nb(Z, exps, coefs, kk, jj, tab, C, ds, out):
    # out[m, k] = sum_t [k_t = k] z_{j_t} coef_t z^e_t I_{tab_t}(|z|^2), I a uniform cubic spline
    M = Z.shape[0]
    T = exps.shape[0]
    nseg = C.shape[2]
    for m in prange(M):
        z1 = Z[m, 0]
        z2 = Z[m, 1]
        s = z1.real * z1.real + z1.imag * z1.imag + z2.real * z2.real + z2.imag * z2.imag
        i = int(s / ds)
        if i >= nseg:
            i = nseg - 1
        dx = s - i * ds
        acc0 = 0j
        acc1 = 0j
        for t in range(T):
            v = coefs[t]
            for _ in range(exps[t, 0]):
                v *= z1
            for _ in range(exps[t, 1]):
                v *= z2
            for _ in range(exps[t, 2]):
                v *= z1.conjugate()
            for _ in range(exps[t, 3]):
                v *= z2.conjugate()
            b = tab[t]
            iv = ((C[b, 0, i] * dx + C[b, 1, i]) * dx + C[b, 2, i]) * dx + C[b, 3, i]
            zj = z1 if jj[t] == 0 else z2
            if kk[t] == 0:
                acc0 += zj * v * iv
            else:
                acc1 += zj * v * iv
        out[m, 0] = acc0
        out[m, 1] = acc1


def poly_table(Z, exps, coefs, kk, jj, tab, C, ds):
    """Compiled evaluation of the tabulated Rudin sums (numba builds only)."""
    Z = np.ascontiguousarray(Z, dtype=np.complex128)
    out = np.empty((len(Z), 2), dtype=np.complex128)
    _poly_table_nb(Z, np.ascontiguousarray(exps, dtype=np.int64), np.ascontiguousarray(coefs, dtype=np.complex128),
                   np.ascontiguousarray(kk, dtype=np.int64), np.ascontiguousarray(jj, dtype=np.int64),
                   np.ascontiguousarray(tab, dtype=np.int64), np.ascontiguousarray(C, dtype=np.float64),
                   float(ds), out)
    return out


def _chunks(M, N, budget=4_000_000):
    step = max(1, budget // max(N, 1))
    for s in range(0, M, step):
        yield slice(s, min(M, s + step))


def source_first_np(src, g, q, tgt):
    out = np.empty(q.shape[:-1] + (len(tgt),), dtype=complex)
    for sl in _chunks(len(tgt), len(src)):
        d = src[None, :, :] - tgt[sl, None, :]
        r2 = np.sum(np.abs(d) ** 2, axis=-1)
        phi = g[None, :, 0] * d[..., 0] + g[None, :, 1] * d[..., 1]
        num = g[None, :, 0] * np.conj(d[..., 1]) - g[None, :, 1] * np.conj(d[..., 0])
        out[..., sl] = ((num / (phi * r2)) @ q.T).T if q.ndim == 2 else (q * num / (phi * r2)).sum(axis=1)
    return out


def target_first_np(src, q, tgt, gt):
    out = np.empty(q.shape[:-1] + (len(tgt),), dtype=complex)
    for sl in _chunks(len(tgt), len(src)):
        d = tgt[sl, None, :] - src[None, :, :]
        r2 = np.sum(np.abs(d) ** 2, axis=-1)
        h = gt[sl, None, :]
        phi = h[..., 0] * d[..., 0] + h[..., 1] * d[..., 1]
        num = h[..., 0] * np.conj(d[..., 1]) - h[..., 1] * np.conj(d[..., 0])
        out[..., sl] = ((num / (phi * r2)) @ q.T).T if q.ndim == 2 else (q * num / (phi * r2)).sum(axis=1)
    return out


def _prep(*arrays):
    return [np.ascontiguousarray(a, dtype=complex) for a in arrays]


def source_first(src, g, q, tgt, use_numba: bool = USE_NUMBA):
    """sum_i q_i k(zeta_i, g_i; z_m); q may hold several charge rows (R, N)."""
    src, g, q, tgt = _prep(src, g, q, tgt)
    if use_numba and USE_NUMBA:
        out = np.empty(q.shape[:-1] + (len(tgt),), dtype=complex)
        if q.ndim == 2:
            _source_first_multi_nb(src, g, q, tgt, out)
        else:
            _source_first_nb(src, g, q, tgt, out)
        return out
    return source_first_np(src, g, q, tgt)


def target_first(src, q, tgt, gt, use_numba: bool = USE_NUMBA):
    src, q, tgt, gt = _prep(src, q, tgt, gt)
    if use_numba and USE_NUMBA:
        out = np.empty(q.shape[:-1] + (len(tgt),), dtype=complex)
        if q.ndim == 2:
            _target_first_multi_nb(src, q, tgt, gt, out)
        else:
            _target_first_nb(src, q, tgt, gt, out)
        return out
    return target_first_np(src, q, tgt, gt)
