import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cr_henkin import studies
from cr_henkin.errors import DataError, PreconditionError
from cr_henkin.geometry import eval_rho
from cr_henkin.lelong import Form11


@settings(max_examples=40)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrip(x):
    assert float(studies.fmt(x)) == x


def test_fmt_kinds():
    assert studies.fmt(True) == "1" and studies.fmt(np.int64(3)) == "3"
    assert studies.fmt(np.float32(0.5)) == "0.5"


@pytest.mark.parametrize("depth", [0.1, 0.36, 0.9])
def test_interior_points_depth(ball, rng, depth):
    z = studies.interior_points(ball, 300, rng, depth)
    assert np.all(eval_rho(ball, z) <= -depth + 1e-12)


def test_interior_points_dalpha(dalpha, rng):
    z = studies.interior_points(dalpha, 100, rng, 0.75)
    assert np.all(eval_rho(dalpha, z) <= -0.75 + 1e-12)
    with pytest.raises(PreconditionError):
        studies.interior_points(dalpha, 10, rng, 5.0)


def test_eval_set_area(ball, rng):
    E = studies.eval_set(ball, 8, 128, rng)
    assert len(E.nodes) == 128
    assert E.weights.sum() == pytest.approx(2 * np.pi**2)
    assert E.lp(np.ones(128), 1) == pytest.approx(2 * np.pi**2)
    assert E.lp(np.arange(128.0), np.inf) == 127


def test_incompatible_gate(ball):
    with pytest.raises(DataError):
        studies.check_incompatible(ball, 8)


def test_shipped_form_real_and_closed(rng):
    alpha = Form11.from_potential(studies.shipped_potential())
    z = (rng.normal(size=(200, 2)) + 1j * rng.normal(size=(200, 2))) * 0.3
    assert alpha.reality(z) == 1
    # the cutoff is steep: FD error is ~0.7 h^2 / 1e-2, so use a small step
    assert alpha.closedness_residual(z, h=1e-5) < 2e-6
    # vanishes on the inner cutoff ball
    assert np.all(np.abs(alpha(z * 0.1 / np.linalg.norm(z, axis=1, keepdims=True) * 0.9)) == 0)


def test_type_report_rows():
    rows = studies.type_report((0.5, 1.0), (2.0,))
    assert all(r.ok for r in rows)
    assert [r.divergent for r in rows if r.kind == "type_complex"] == [False, True]
    with pytest.raises(PreconditionError):
        studies.type_report((), ())


def test_lemma_study_setting_guard(ball, rng):
    with pytest.raises(PreconditionError):
        studies.lemma_study(ball, 23, 10, rng=rng)
