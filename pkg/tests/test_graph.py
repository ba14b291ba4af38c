import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoexplore.core import MapStore, points_segment_distance
from topoexplore.errors import ParameterError, StateError
from topoexplore.graph import (
    GraphConfig,
    KeyframeGraph,
    Submap,
    build_submap,
    collision_free,
    path_length,
    shortest_path,
    submap_from_ids,
    update_graph,
)

from conftest import store_from
from oracles import all_simple_path_lengths, dense_segment_clear

vec = st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))


def sub(points):
    return Submap(np.asarray(points, dtype=float).reshape(-1, 3), (0,))


# -- build_submap --------------------------------------------------------------------


def test_submap_single_keyframe():
    store = store_from([np.ones((7, 3))])
    s = build_submap(store, (100, 0, 0), 10)
    assert s.source_keyframe_ids == (0,) and np.array_equal(s.points, store.scans[0].points)


def test_submap_concatenation_size():
    store = store_from([np.zeros((3, 3)), np.zeros((5, 3)), np.zeros((11, 3))], [(0, 0, 0), (1, 0, 0), (9, 0, 0)])
    s = build_submap(store, (0.2, 0, 0), 2)
    assert s.source_keyframe_ids == (0, 1) and len(s) == 8


def test_submap_matches_knn_oracle():
    rng = np.random.default_rng(2)
    pos = rng.uniform(-20, 20, size=(50, 3))
    store = store_from([np.zeros((1, 3))] * 50, pos)
    for q in rng.uniform(-20, 20, size=(10, 3)):
        oracle = sorted(sorted(range(50), key=lambda i: (math.dist(pos[i], q), i))[:10])
        assert list(build_submap(store, q, 10).source_keyframe_ids) == oracle


def test_submap_empty_store():
    with pytest.raises(StateError):
        build_submap(MapStore(), (0, 0, 0), 3)


# -- collision_free ------------------------------------------------------------------


def test_collision_examples():
    assert collision_free((0, 0, 0), (10, 0, 0), sub([]), 0.5)
    assert not collision_free((0, 0, 0), (10, 0, 0), sub([(5, 0.3, 0)]), 0.5)
    assert collision_free((0, 0, 0), (10, 0, 0), sub([(5, 0.8, 0)]), 0.5)


@settings(max_examples=200, deadline=None)
@given(vec, vec, st.lists(vec, min_size=1, max_size=15), st.floats(0.05, 3.0), st.floats(0.0, 1.0))
def test_collision_symmetry_and_monotonicity(a, b, pts, r, shrink):
    s = sub(pts)
    assert collision_free(a, b, s, r) == collision_free(b, a, s, r)
    if collision_free(a, b, s, r) and r * shrink > 0:
        assert collision_free(a, b, s, r * shrink)


@settings(max_examples=150, deadline=None)
@given(vec, vec, st.lists(vec, min_size=1, max_size=10), st.floats(0.05, 3.0))
def test_collision_dense_oracle(a, b, pts, r):
    s = sub(pts)
    clearance = points_segment_distance(s.points, a, b).min()
    # dense sampling overestimates clearance by at most half a sample spacing
    slack = math.dist(a, b) / 999 / 2
    if abs(clearance - r) <= max(1e-6, slack):
        return
    assert collision_free(a, b, s, r) == dense_segment_clear(a, b, pts, r)


# -- update_graph ----------------------------------------------------------------------


def test_first_keyframe_bootstrap():
    store = store_from([np.zeros((0, 3))])
    g = update_graph(KeyframeGraph(), store, store.keyframes[0], GraphConfig())
    assert g.nodes == [0] and g.edges == []


def test_two_keyframes_empty_world():
    store = store_from([np.zeros((0, 3))] * 2, [(0, 0, 0), (3, 0, 0)])
    g = KeyframeGraph()
    for kf in store.keyframes:
        update_graph(g, store, kf, GraphConfig())
    assert g.nodes == [0, 1] and [(a, b) for a, b, _ in g.edges] == [(0, 1)]
    assert g.edges[0][2] == pytest.approx(3.0)


def wall_points(x=0.0, half=5.0, step=0.25):
    ys = np.arange(-half, half + 1e-9, step)
    zs = np.arange(-half, half + 1e-9, step)
    return np.array([(x, y, z) for y in ys for z in zs])


def test_wall_blocks_edge():
    wall = wall_points()
    store = store_from([wall, wall], [(-3, 0, 0), (3, 0, 0)])
    g = KeyframeGraph()
    for kf in store.keyframes:
        update_graph(g, store, kf, GraphConfig(k=10, r_safe=0.5))
    assert g.edges == []
    assert not dense_segment_clear((-3, 0, 0), (3, 0, 0), wall, 0.5)


def test_update_requires_stored_keyframe():
    store = store_from([np.zeros((0, 3))])
    other = store_from([np.zeros((0, 3))] * 2, [(0, 0, 0), (1, 1, 1)])
    with pytest.raises(StateError):
        update_graph(KeyframeGraph(), store, other.keyframes[1], GraphConfig())


def test_edges_reverify_against_recorded_submaps():
    rng = np.random.default_rng(4)
    pillars = [c + rng.normal(scale=0.3, size=(40, 3)) for c in rng.uniform(-8, 8, size=(6, 3))]
    cloud = np.vstack(pillars)
    positions = rng.uniform(-10, 10, size=(30, 3))
    store = MapStore()
    g = KeyframeGraph()
    cfg = GraphConfig(k=5, r_safe=0.6)
    for i, p in enumerate(positions):
        near = cloud[np.linalg.norm(cloud - p, axis=1) < 8]
        kf = store.append(p, i, near)
        update_graph(g, store, kf, cfg)
        # the previous keyframe is always a candidate, so a missing edge means blocked
        if i and not g.has_edge(i, i - 1):
            mid = 0.5 * (positions[i] + positions[i - 1])
            assert not collision_free(p, positions[i - 1], build_submap(store, mid, cfg.k), cfg.r_safe)
    assert g.edges
    for a, b, w in g.edges:
        ids = g.edge_sources[(a, b)]
        assert collision_free(positions[a], positions[b], submap_from_ids(store, ids), cfg.r_safe)
        assert w == pytest.approx(np.linalg.norm(positions[a] - positions[b]))


# -- shortest_path -----------------------------------------------------------------------


def graph_from(positions, edges):
    g = KeyframeGraph()
    for i, p in enumerate(positions):
        g.add_node(i, p)
    for a, b in edges:
        g.add_edge(a, b)
    return g


def test_path_identity():
    g = graph_from([(0, 0, 0)], [])
    p = shortest_path(g, 0, 0)
    assert p.node_ids == (0,) and p.length == 0.0


def test_path_triangle_two_hops():
    g = KeyframeGraph()
    for i in range(3):
        g.add_node(i, (0, 0, 0))
    # weights set by hand: 0-1 = 1, 1-2 = 1, 0-2 = 3
    for a, b, w in ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)):
        g.adj[a][b] = g.adj[b][a] = w
    p = shortest_path(g, 0, 2)
    assert p.node_ids == (0, 1, 2) and p.length == 2.0


def test_path_unreachable_and_unknown():
    g = graph_from([(0, 0, 0), (1, 0, 0)], [])
    assert shortest_path(g, 0, 1) is None
    with pytest.raises(ParameterError):
        shortest_path(g, 0, 7)


def test_path_tie_break_lexicographic():
    # square: 0-1-3 and 0-2-3 are equally long
    g = graph_from([(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)], [(0, 2), (2, 3), (0, 1), (1, 3)])
    assert shortest_path(g, 0, 3).node_ids == (0, 1, 3)


def test_graph_rejects_bad_edges():
    g = graph_from([(0, 0, 0)], [])
    with pytest.raises(ParameterError):
        g.add_edge(0, 0)
    with pytest.raises(ParameterError):
        g.add_edge(0, 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 7), st.floats(0.1, 0.9), st.integers(0, 2**31 - 1))
def test_path_brute_force_and_straight_line_bound(n, density, seed):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-5, 5, size=(n, 3))
    edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < density]
    g = graph_from(pos, edges)
    lengths = all_simple_path_lengths(g.adj, 0, n - 1)
    p = shortest_path(g, 0, n - 1)
    if not lengths:
        assert p is None
        return
    assert abs(p.length - min(lengths)) <= 1e-9
    assert p.length >= np.linalg.norm(pos[0] - pos[n - 1]) - 1e-9
    assert p.length == pytest.approx(path_length(g, p.node_ids))
    assert all(g.has_edge(a, b) for a, b in zip(p.node_ids, p.node_ids[1:]))
