import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.minnorm import certificate_gap, min_norm_by_faces, min_norm_point
from oracles import min_norm_slsqp, segment_projection


def test_symmetric_pair():
    p, w = min_norm_point([(1, 0), (0, 1)])
    assert np.allclose(p, (0.5, 0.5))
    assert w.sum() == pytest.approx(1.0)


def test_collinear_nearest_vertex():
    p, _ = min_norm_point([(2, 0), (3, 0)])
    assert np.allclose(p, (2, 0))


def test_case_one_drift():
    lam = np.array([0.5, 0.5, 0.75])
    gens = [lam - (1, 1, 0), lam - (1, 0, 1)]
    p, _ = min_norm_point(gens)
    assert np.allclose(p, (-0.5, 0.125, 0.125), atol=1e-12)
    assert np.allclose(p, segment_projection(*gens), atol=1e-12)


def test_contains_origin():
    p, _ = min_norm_point([(1, 1), (-1, 1), (0, -1)])
    assert np.linalg.norm(p) < 1e-12


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        min_norm_point([(1, 0), (1, 0, 0)])


gen_sets = st.integers(1, 4).flatmap(lambda d: st.lists(
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=d, max_size=d), min_size=1, max_size=8))


@given(gen_sets)
def test_wolfe_certificate_and_weights(vecs):
    V = np.asarray(vecs)
    p, w = min_norm_point(V)
    assert certificate_gap(V, p) >= -1e-9
    assert np.all(w >= -1e-12) and w.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(w @ V, p, atol=1e-9)


@given(gen_sets)
def test_agrees_with_face_enumeration(vecs):
    p, _ = min_norm_point(vecs)
    q = min_norm_by_faces(vecs)
    assert np.linalg.norm(p - q) <= 1e-6
    assert abs(np.linalg.norm(p) - np.linalg.norm(q)) <= 1e-6


@given(gen_sets)
def test_agrees_with_generic_optimiser(vecs):
    p, _ = min_norm_point(vecs)
    q = min_norm_slsqp(vecs)
    assert np.linalg.norm(p) <= np.linalg.norm(q) + 1e-7
    assert np.linalg.norm(p - q) <= 1e-4
