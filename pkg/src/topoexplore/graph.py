"""Keyframe traversability graph with KNN-submap collision checks."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .core import Keyframe, MapStore, as_array, knn_keyframes, points_segment_distance
from .errors import ParameterError, StateError


@dataclass(frozen=True)
class GraphConfig:
    k: int = 10
    r_safe: float = 0.6

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        if not self.r_safe > 0:
            raise ParameterError("r_safe must be positive")


@dataclass(frozen=True)
class Submap:
    points: np.ndarray
    source_keyframe_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Path:
    node_ids: tuple[int, ...]
    length: float


def submap_from_ids(store: MapStore, ids) -> Submap:
    ids = tuple(sorted(int(i) for i in ids))
    if not ids:
        return Submap(np.empty((0, 3)), ())
    return Submap(np.concatenate([store.scans[i].points for i in ids]), ids)


def build_submap(store: MapStore, around, k: int) -> Submap:
    """Concatenate, in id order, the scans of the ``k`` keyframes nearest ``around``."""
    if len(store) == 0:
        raise StateError("cannot build a submap from an empty map store")
    return submap_from_ids(store, knn_keyframes(store, around, k))


def clearance(a, b, submap: Submap) -> float:
    if len(submap) == 0:
        return math.inf
    return float(points_segment_distance(submap.points, a, b).min())


def collision_free(a, b, submap: Submap, r_safe: float) -> bool:
    """True iff every submap point is farther than ``r_safe`` from segment ``ab``."""
    if len(submap) == 0:
        return True
    a = as_array(a)
    b = as_array(b)
    lo = np.minimum(a, b) - r_safe
    hi = np.maximum(a, b) + r_safe
    pts = submap.points
    # points outside the inflated bounding box are farther than r_safe
    near = pts[np.all((pts >= lo) & (pts <= hi), axis=1)]
    if len(near) == 0:
        return True
    return bool(points_segment_distance(near, a, b).min() > r_safe)


class KeyframeGraph:
    """Undirected graph over keyframe ids, weighted by Euclidean distance.

    ``edge_sources`` remembers which keyframe scans formed the collision
    submap when each edge was accepted.
    """

    def __init__(self) -> None:
        self.positions: dict[int, np.ndarray] = {}
        self.adj: dict[int, dict[int, float]] = {}
        self.edge_sources: dict[tuple[int, int], tuple[int, ...]] = {}

    @property
    def nodes(self) -> list[int]:
        return sorted(self.adj)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(a, b, self.adj[a][b]) for a in sorted(self.adj) for b in sorted(self.adj[a]) if a < b]

    def __contains__(self, node: int) -> bool:
        return node in self.adj

    def add_node(self, node: int, position) -> None:
        if node not in self.adj:
            self.adj[node] = {}
            self.positions[node] = as_array(position)

    def add_edge(self, a: int, b: int, sources: tuple[int, ...] = ()) -> None:
        if a == b:
            raise ParameterError("self-edges are not allowed")
        if a not in self.adj or b not in self.adj:
            raise ParameterError(f"edge ({a}, {b}) references an unknown node")
        w = float(np.linalg.norm(self.positions[a] - self.positions[b]))
        self.adj[a][b] = w
        self.adj[b][a] = w
        self.edge_sources[(min(a, b), max(a, b))] = sources

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.adj.get(a, {})


def update_graph(g: KeyframeGraph, store: MapStore, new_kf: Keyframe, config: GraphConfig) -> KeyframeGraph:
    """Add ``new_kf`` and its collision-free edges to the k nearest nodes and K_{t-1}.

    Each candidate edge is checked against a submap gathered around the
    segment midpoint. ``g`` is updated in place and returned.
    """
    if new_kf.id >= len(store) or store.keyframes[new_kf.id] != new_kf:
        raise StateError("new keyframe must already be in the map store")
    g.add_node(new_kf.id, new_kf.position)
    existing = [n for n in g.nodes if n != new_kf.id]
    if not existing:
        return g
    pos = store.positions
    here = pos[new_kf.id]
    d = np.linalg.norm(pos[existing] - here, axis=1)
    order = np.lexsort((np.array(existing), d))
    candidates = [existing[i] for i in order[: config.k]]
    prev = new_kf.id - 1
    if prev in g and prev not in candidates:
        candidates.append(prev)
    for other in candidates:
        if g.has_edge(new_kf.id, other):
            continue
        mid = 0.5 * (here + pos[other])
        sub = build_submap(store, mid, config.k)
        if collision_free(here, pos[other], sub, config.r_safe):
            g.add_edge(new_kf.id, other, sub.source_keyframe_ids)
    return g


def shortest_path(g: KeyframeGraph, src: int, dst: int) -> Path | None:
    """Dijkstra; equal-length paths resolve to the lexicographically smaller id sequence."""
    if src not in g or dst not in g:
        raise ParameterError(f"unknown node in query ({src}, {dst})")
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    done: set[int] = set()
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        if node == dst:
            return Path(path, path_length(g, path))
        done.add(node)
        for nbr, w in g.adj[node].items():
            if nbr not in done:
                heapq.heappush(heap, (dist + w, path + (nbr,)))
    return None


def path_length(g: KeyframeGraph, node_ids) -> float:
    total = 0.0
    for a, b in zip(node_ids, node_ids[1:]):
        total += g.adj[a][b]
    return total
