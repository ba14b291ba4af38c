import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoexplore.core import (
    MapStore,
    Point3,
    Pose,
    TaggedPoints,
    centroid,
    knn_keyframes,
    point_segment_distance,
    points_segment_distance,
    voxel_downsample,
    wrap_angle,
)
from topoexplore.errors import ParameterError, StateError

from conftest import store_from

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vec = st.tuples(coord, coord, coord)


def tagged(points, ids=None):
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    ids = np.arange(len(pts)) if ids is None else np.asarray(ids)
    return TaggedPoints(pts, ids)


# -- primitives ---------------------------------------------------------------


def test_point3_rejects_non_finite():
    with pytest.raises(ParameterError):
        Point3(0.0, math.nan, 0.0)
    assert np.array_equal(np.asarray(Point3(1, 2, 3)), [1.0, 2.0, 3.0])


def test_pose_wraps_yaw():
    assert Pose(Point3(0, 0, 0), 3 * math.pi).yaw == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_map_store_pairing_and_readonly_scans():
    store = MapStore()
    kf = store.append((1, 2, 3), 0, np.zeros((4, 3)))
    assert kf.id == 0 and store.scans[0].keyframe_id == 0
    with pytest.raises(ValueError):
        store.scans[0].points[0, 0] = 5.0
    store.append((2, 2, 3), 1, np.ones((2, 3)))
    tp = store.tagged_points()
    assert tp.keyframe_ids.tolist() == [0, 0, 0, 0, 1, 1]
    assert all(s.keyframe_id == k.id for s, k in zip(store.scans, store.keyframes))


# -- voxel_downsample -----------------------------------------------------------


def test_downsample_empty():
    assert len(voxel_downsample(TaggedPoints.empty(), 1.0)) == 0


def test_downsample_first_point_wins():
    out = voxel_downsample(tagged([(0.2, 0.2, 0.2), (0.7, 0.7, 0.7)], [0, 1]), 1.0)
    assert out.points.tolist() == [[0.2, 0.2, 0.2]]
    assert out.keyframe_ids.tolist() == [0]


def test_downsample_matches_hash_set_oracle():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 10, size=(1000, 3))
    out = voxel_downsample(tagged(pts), 2.0)
    oracle = {tuple(math.floor(c / 2.0) for c in p) for p in pts.tolist()}
    assert len(out) == len(oracle)
    assert {tuple(math.floor(c / 2.0) for c in p) for p in out.points.tolist()} == oracle


@settings(max_examples=60, deadline=None)
@given(st.lists(vec, min_size=0, max_size=80), st.floats(0.3, 5.0))
def test_downsample_shrinks_and_is_idempotent(points, v):
    tp = tagged(points)
    once = voxel_downsample(tp, v)
    twice = voxel_downsample(once, v)
    assert len(once) <= len(tp)
    assert np.array_equal(once.points, twice.points)
    assert np.array_equal(once.keyframe_ids, twice.keyframe_ids)


# -- point_segment_distance -------------------------------------------------------


@pytest.mark.parametrize(
    "p, expected", [((5, 3, 0), 3.0), ((-4, 3, 0), 5.0), ((12, 0, 0), 2.0)]
)
def test_segment_distance_examples(p, expected):
    assert point_segment_distance(p, (0, 0, 0), (10, 0, 0)) == pytest.approx(expected)


def test_segment_distance_degenerate_segment():
    assert point_segment_distance((3, 4, 0), (0, 0, 0), (0, 0, 0)) == pytest.approx(5.0)


@settings(max_examples=300, deadline=None)
@given(vec, vec, vec)
def test_segment_distance_symmetric_and_bounded(p, a, b):
    d_ab = point_segment_distance(p, a, b)
    d_ba = point_segment_distance(p, b, a)
    assert d_ab == d_ba
    bound = min(math.dist(p, a), math.dist(p, b))
    assert d_ab <= bound + 1e-9


@settings(max_examples=100, deadline=None)
@given(vec, vec, vec)
def test_segment_distance_against_sampling(p, a, b):
    ts = np.linspace(0, 1, 2001)[:, None]
    samples = np.asarray(a) + ts * (np.asarray(b) - np.asarray(a))
    dense = np.sqrt(((samples - np.asarray(p)) ** 2).sum(axis=1)).min()
    length = math.dist(a, b)
    d = point_segment_distance(p, a, b)
    assert d <= dense + 1e-9
    assert dense - d <= length / 2000 + 1e-9


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(50, 3)) * 5
    a, b = rng.normal(size=3), rng.normal(size=3)
    vec_d = points_segment_distance(pts, a, b)
    assert np.allclose(vec_d, [point_segment_distance(p, a, b) for p in pts], rtol=0, atol=1e-12)


# -- knn_keyframes -------------------------------------------------------------------


def test_knn_one_dimensional():
    store = store_from([[]] * 3, [(0, 0, 0), (5, 0, 0), (20, 0, 0)])
    assert knn_keyframes(store, (6, 0, 0), 2) == [1, 0]


def test_knn_k_exceeds_population():
    store = store_from([[]] * 3, [(0, 0, 0), (5, 0, 0), (20, 0, 0)])
    assert sorted(knn_keyframes(store, (6, 0, 0), 10)) == [0, 1, 2]


def test_knn_rejects_bad_k():
    store = store_from([[]], [(0, 0, 0)])
    with pytest.raises(ParameterError):
        knn_keyframes(store, (0, 0, 0), 0)


def test_knn_matches_full_sort_oracle():
    rng = np.random.default_rng(11)
    pos = rng.uniform(-30, 30, size=(200, 3))
    store = store_from([[]] * 200, pos)
    for q in rng.uniform(-30, 30, size=(20, 3)):
        oracle = sorted(range(200), key=lambda i: (math.dist(pos[i], q), i))[:10]
        assert knn_keyframes(store, q, 10) == oracle


@settings(max_examples=50, deadline=None)
@given(st.lists(vec, min_size=1, max_size=30), vec, st.integers(1, 40))
def test_knn_distances_non_decreasing(positions, q, k):
    store = store_from([[]] * len(positions), positions)
    ids = knn_keyframes(store, q, k)
    d = [math.dist(positions[i], q) for i in ids]
    assert len(ids) == min(k, len(positions))
    assert all(x <= y for x, y in zip(d, d[1:]))


# -- centroid ---------------------------------------------------------------------------


def test_centroid_examples():
    assert tuple(centroid([(0, 0, 0), (2, 0, 0)])) == (1.0, 0.0, 0.0)
    assert tuple(centroid([(1, 1, 1)])) == (1.0, 1.0, 1.0)


def test_centroid_matches_exact_rational_mean():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(50, 3)) * 1e3
    exact = [float(sum(Fraction(v) for v in pts[:, j]) / len(pts)) for j in range(3)]
    got = centroid(pts)
    assert np.allclose(tuple(got), exact, rtol=1e-14, atol=1e-12)


def test_centroid_empty_raises():
    with pytest.raises(ParameterError):
        centroid(np.empty((0, 3)))


def test_latest_on_empty_store():
    with pytest.raises(StateError):
        MapStore().latest
