import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cr_henkin import _hot
from cr_henkin.errors import PreconditionError, SingularityError
from cr_henkin.geometry import make_domain, to_complex
from cr_henkin.kernels import (henkin_kernel, kernel_h, lemma22_batch, lemma_scan,
                               sample_admissible_pairs, export_samples_csv)
from cr_henkin.geometry import eval_rho, grad_rho


def test_kernel_diagonal_raises(ball):
    z = np.array([0.6, 0.8j])
    with pytest.raises(SingularityError):
        kernel_h(ball, z, z)


def test_kernel_matches_definition(ball):
    zeta = np.array([0.6, 0.8j])
    z = np.array([0.1, -0.2 + 0.1j])
    d = zeta - z
    r = np.conj(zeta)               # d rho / d zeta_j on the ball
    num = r[0] * np.conj(d[1]) - r[1] * np.conj(d[0])
    expect = num / (np.sum(r * d) * np.sum(np.abs(d) ** 2))
    assert kernel_h(ball, zeta, z) == pytest.approx(expect, rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(arrays(float, (7, 4), elements=st.floats(-1, 1)), arrays(float, (7,), elements=st.floats(-1, 1)),
       arrays(float, (5, 4), elements=st.floats(-0.5, 0.5)))
def test_numba_and_numpy_sums_agree(src, q, tgt):
    src = to_complex(src) + 2.0          # keep targets off the sources
    tgt = to_complex(tgt)
    g = np.conj(src)
    a = _hot.source_first(src, g, q.astype(complex), tgt, use_numba=True)
    b = _hot.source_first(src, g, q.astype(complex), tgt, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
    gt = np.conj(tgt) + 3.0
    a = _hot.target_first(src, q.astype(complex), tgt, gt, use_numba=True)
    b = _hot.target_first(src, q.astype(complex), tgt, gt, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_multi_charge_rows_match_single(rng):
    src = to_complex(rng.normal(size=(30, 4))) + 2.0
    tgt = to_complex(rng.normal(size=(6, 4))) * 0.3
    Q = rng.normal(size=(3, 30)) + 1j * rng.normal(size=(3, 30))
    g = np.conj(src)
    for use in (True, False):
        multi = _hot.source_first(src, g, Q, tgt, use_numba=use)
        for r in range(3):
            np.testing.assert_allclose(multi[r], _hot.source_first(src, g, Q[r], tgt, use_numba=use),
                                       rtol=1e-12)


def test_source_first_is_kernel_sum(ball, rng):
    src = to_complex(rng.normal(size=(20, 4)))
    src /= np.linalg.norm(src, axis=1, keepdims=True)
    tgt = to_complex(rng.normal(size=(4, 4))) * 0.2
    q = rng.normal(size=20) + 0j
    g = grad_rho(ball, src)
    ref = np.array([np.sum(q * henkin_kernel(g, src, t)) for t in tgt])
    np.testing.assert_allclose(_hot.source_first(src, g, q, tgt), ref, rtol=1e-12)


def test_admissible_pairs(rng):
    dom = make_domain("om1", alpha1=0.5, alpha2=0.5)
    zeta, z = sample_admissible_pairs(dom, 500, rng)
    assert len(zeta) == 500
    assert np.all(eval_rho(dom, zeta) >= eval_rho(dom, z))


def test_lemma_scan_positive(rng):
    dom = make_domain("om1", alpha1=0.5, alpha2=0.5)
    b = lemma_scan(dom, 2000, 1, rng)
    assert b.min_ratio() > 0
    assert b.sample(0).k == 1


def test_lemma_k_check(rng):
    dom = make_domain("om1", alpha1=0.5, alpha2=0.5)
    zeta, z = sample_admissible_pairs(dom, 10, rng)
    with pytest.raises(PreconditionError):
        lemma22_batch(dom, zeta, z, 3)


def test_samples_csv(tmp_path, rng):
    dom = make_domain("om1", alpha1=0.5, alpha2=0.5)
    b = lemma_scan(dom, 20, 1, rng)
    export_samples_csv(b, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert len(lines) == 21 and lines[0].startswith("zeta_x1")
