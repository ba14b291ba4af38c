"""Segmented exploration regions: coverage partition, clustering, frontiers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .core import MapStore, Point3, TaggedPoints, centroid, voxel_downsample_with_keys
from .errors import ParameterError, StateError


@dataclass(frozen=True)
class SerConfig:
    zeta_coverage: float = 7.0
    v_down: float = 2.0
    cluster_tol: float | None = None  # defaults to 2 * v_down
    min_cluster_size: int = 3

    def __post_init__(self) -> None:
        if self.cluster_tol is None:
            object.__setattr__(self, "cluster_tol", 2.0 * self.v_down)
        problems = []
        if not self.zeta_coverage > 0:
            problems.append("zeta_coverage must be positive")
        if not self.v_down > 0:
            problems.append("v_down must be positive")
        if not self.cluster_tol > 0:
            problems.append("cluster_tol must be positive")
        elif self.v_down > 0 and self.cluster_tol < self.v_down:
            problems.append("cluster_tol must be >= v_down")
        if self.min_cluster_size < 1:
            problems.append("min_cluster_size must be >= 1")
        if problems:
            raise ParameterError("; ".join(problems))


@dataclass(frozen=True)
class CoveragePartition:
    covered: TaggedPoints
    uncovered: TaggedPoints
    covered_mask: np.ndarray  # over the input order


@dataclass(frozen=True)
class SER:
    id: int
    points: TaggedPoints
    frontier: Point3
    keys: np.ndarray = field(repr=False)  # voxel codes of the member points

    @property
    def volume(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SerSet:
    sers: list[SER]
    source_step: int
    downsampled: TaggedPoints = field(repr=False)
    partition: CoveragePartition = field(repr=False)
    discarded: int = 0

    def __len__(self) -> int:
        return len(self.sers)

    def __iter__(self):
        return iter(self.sers)

    def __getitem__(self, i: int) -> SER:
        return self.sers[i]


def min_keyframe_distance(points: np.ndarray, kf_positions: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Distance from each point to its nearest keyframe, brute force in chunks."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    kfs = np.asarray(kf_positions, dtype=float).reshape(-1, 3)
    out = np.full(len(pts), np.inf)
    if len(kfs) == 0:
        return out
    for s in range(0, len(pts), chunk):
        diff = pts[s : s + chunk, None, :] - kfs[None, :, :]
        out[s : s + chunk] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).min(axis=1)
    return out


def partition_coverage(points: TaggedPoints, keyframes, zeta: float) -> CoveragePartition:
    """Split points into those within ``zeta`` (inclusive) of any keyframe and the rest."""
    if not zeta > 0:
        raise ParameterError("zeta must be positive")
    kf_pos = _keyframe_positions(keyframes)
    mask = min_keyframe_distance(points.points, kf_pos) <= zeta
    return CoveragePartition(points[mask], points[~mask], mask)


def _keyframe_positions(keyframes) -> np.ndarray:
    if isinstance(keyframes, np.ndarray):
        return keyframes.reshape(-1, 3)
    return np.array([kf.position.array for kf in keyframes]).reshape(-1, 3)


def cluster_indices(points: np.ndarray, tol: float, min_size: int = 1) -> list[np.ndarray]:
    """Connected components under the ``distance <= tol`` relation, as index arrays.

    Components are ordered by their smallest member index; members stay in
    input order. Components smaller than ``min_size`` are dropped.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if min_size < 1:
        raise ParameterError("min_size must be >= 1")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return []
    # candidate pairs from the tree with a small margin, then the exact test
    pairs = cKDTree(pts).query_pairs(tol * (1 + 1e-9) + 1e-12, output_type="ndarray")
    if len(pairs):
        diff = pts[pairs[:, 0]] - pts[pairs[:, 1]]
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        pairs = pairs[d <= tol]
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs) else ([], ([], [])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    # relabel by first appearance so cluster order follows the lowest member index
    _, first = np.unique(labels, return_index=True)
    clusters = []
    for lab in labels[np.sort(first)]:
        idx = np.flatnonzero(labels == lab)
        if len(idx) >= min_size:
            clusters.append(idx)
    return clusters


def cluster_uncovered(uncovered: TaggedPoints, tol: float, min_size: int = 1) -> list[TaggedPoints]:
    return [uncovered[idx] for idx in cluster_indices(uncovered.points, tol, min_size)]


class DownsampledMap:
    """Incremental equivalent of downsampling every stored scan at once.

    Scans are folded in keyframe order and a voxel keeps its first point, so
    the result matches ``voxel_downsample(store.tagged_points(), v_down)``.
    """

    def __init__(self, v_down: float):
        if not v_down > 0:
            raise ParameterError("v_down must be positive")
        self.v_down = v_down
        self.keys = np.empty(0, dtype=np.int64)
        self.points = TaggedPoints.empty()
        self._n_scans = 0

    def sync(self, store: MapStore) -> "DownsampledMap":
        while self._n_scans < len(store):
            self.add(store.tagged_scan(self._n_scans))
            self._n_scans += 1
        return self

    def add(self, tagged: TaggedPoints) -> None:
        pts, keys = voxel_downsample_with_keys(tagged, self.v_down)
        fresh = ~np.isin(keys, self.keys, assume_unique=True)
        all_keys = np.concatenate([self.keys, keys[fresh]])
        merged = TaggedPoints.concat([self.points, pts[fresh]])
        order = np.argsort(all_keys, kind="stable")
        self.keys = all_keys[order]
        self.points = merged[order]


def generate_sers(store: MapStore, config: SerConfig, dmap: DownsampledMap | None = None, step: int | None = None) -> SerSet:
    """Downsample the map, partition it by keyframe coverage and cluster the rest.

    ``dmap`` is an optional incremental cache; it must use ``config.v_down``.
    """
    if len(store) == 0:
        raise StateError("cannot generate SERs from an empty map store")
    if dmap is None:
        dmap = DownsampledMap(config.v_down)
    elif dmap.v_down != config.v_down:
        raise ParameterError("downsample cache voxel size differs from config")
    dmap.sync(store)
    down, keys = dmap.points, dmap.keys
    part = partition_coverage(down, store.positions, config.zeta_coverage)
    unc_keys = keys[~part.covered_mask]
    clusters = cluster_indices(part.uncovered.points, config.cluster_tol, config.min_cluster_size)
    sers = []
    for j, idx in enumerate(clusters):
        pts = part.uncovered[idx]
        sers.append(SER(j, pts, centroid(pts.points), unc_keys[idx]))
    kept = sum(len(c) for c in clusters)
    return SerSet(
        sers=sers,
        source_step=store.latest.step if step is None else step,
        downsampled=down,
        partition=part,
        discarded=len(part.uncovered) - kept,
    )

