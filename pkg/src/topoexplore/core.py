"""Geometry primitives and the paired keyframe/scan map store.

Point sets are held as struct-of-arrays (``(N, 3)`` float arrays plus a
parallel keyframe-id array) rather than lists of point objects, so every
operation here is vectorised over numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ParameterError, StateError

# Voxel keys are packed into one int64: 21 bits per axis, z-major.
_KEY_BITS = 21
_KEY_BIAS = 1 << (_KEY_BITS - 1)
_KEY_MASK = (1 << _KEY_BITS) - 1


@dataclass(frozen=True, slots=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ParameterError(f"non-finite point ({self.x}, {self.y}, {self.z})")

    def __iter__(self):
        yield self.x
        yield self.y
        yield self.z

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x, self.y, self.z], dtype=dtype or float)

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def of(cls, p) -> "Point3":
        x, y, z = (float(c) for c in p)
        return cls(x, y, z)


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@dataclass(frozen=True, slots=True)
class Pose:
    position: Point3
    yaw: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.yaw):
            raise ParameterError("non-finite yaw")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass(frozen=True, slots=True)
class Keyframe:
    id: int
    position: Point3
    step: int


@dataclass(frozen=True)
class Scan:
    keyframe_id: int
    points: np.ndarray  # (N, 3) world frame

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class TaggedPoints:
    """Points paired with the id of the keyframe whose scan produced them."""

    points: np.ndarray
    keyframe_ids: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        ids = np.asarray(self.keyframe_ids, dtype=np.int64).reshape(-1)
        if len(pts) != len(ids):
            raise ParameterError("points and keyframe_ids differ in length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "keyframe_ids", ids)

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, index) -> "TaggedPoints":
        return TaggedPoints(self.points[index], self.keyframe_ids[index])

    @classmethod
    def empty(cls) -> "TaggedPoints":
        return cls(np.empty((0, 3)), np.empty(0, dtype=np.int64))

    @classmethod
    def concat(cls, parts: Iterable["TaggedPoints"]) -> "TaggedPoints":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.points for p in parts]),
            np.concatenate([p.keyframe_ids for p in parts]),
        )


class MapStore:
    """Append-only paired arrays of keyframes and their scans."""

    def __init__(self) -> None:
        self.keyframes: list[Keyframe] = []
        self.scans: list[Scan] = []
        self._positions = np.empty((0, 3))

    def __len__(self) -> int:
        return len(self.keyframes)

    def append(self, position, step: int, points) -> Keyframe:
        kf = Keyframe(len(self.keyframes), Point3.of(position), int(step))
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        pts.setflags(write=False)
        self.keyframes.append(kf)
        self.scans.append(Scan(kf.id, pts))
        self._positions = np.vstack([self._positions, kf.position.array])
        if self.scans[-1].keyframe_id != self.keyframes[-1].id or len(self.scans) != len(self.keyframes):
            raise StateError("map store pairing broken")
        return kf

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def latest(self) -> Keyframe:
        if not self.keyframes:
            raise StateError("map store is empty")
        return self.keyframes[-1]

    def tagged_scan(self, kf_id: int) -> TaggedPoints:
        pts = self.scans[kf_id].points
        return TaggedPoints(pts, np.full(len(pts), kf_id, dtype=np.int64))

    def tagged_points(self) -> TaggedPoints:
        return TaggedPoints.concat(self.tagged_scan(i) for i in range(len(self)))


def as_array(p) -> np.ndarray:
    if isinstance(p, Point3):
        return p.array
    return np.asarray(p, dtype=float).reshape(3)


def distances(points: np.ndarray, q) -> np.ndarray:
    """Euclidean distance from every row of ``points`` to ``q``."""
    diff = np.asarray(points, dtype=float).reshape(-1, 3) - as_array(q)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def voxel_keys(points: np.ndarray, v: float) -> np.ndarray:
    """Pack origin-anchored voxel indices into sortable int64 codes (z, y, x)."""
    idx = np.floor(np.asarray(points, dtype=float).reshape(-1, 3) / v).astype(np.int64)
    if idx.size and (idx.min() < -_KEY_BIAS or idx.max() >= _KEY_BIAS):
        raise ParameterError("point coordinates too large for voxel key packing")
    b = idx + _KEY_BIAS
    return (b[:, 2] << (2 * _KEY_BITS)) | (b[:, 1] << _KEY_BITS) | b[:, 0]


def unpack_voxel_keys(codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    x = (codes & _KEY_MASK) - _KEY_BIAS
    y = ((codes >> _KEY_BITS) & _KEY_MASK) - _KEY_BIAS
    z = ((codes >> (2 * _KEY_BITS)) & _KEY_MASK) - _KEY_BIAS
    return np.stack([x, y, z], axis=1)


def voxel_downsample_with_keys(points: TaggedPoints, v_down: float) -> tuple[TaggedPoints, np.ndarray]:
    if not v_down > 0:
        raise ParameterError(f"v_down must be positive, got {v_down}")
    if len(points) == 0:
        return TaggedPoints.empty(), np.empty(0, dtype=np.int64)
    codes = voxel_keys(points.points, v_down)
    # np.unique reports the first occurrence, so the first-inserted point wins
    uniq, first = np.unique(codes, return_index=True)
    return points[first], uniq


def voxel_downsample(points: TaggedPoints, v_down: float) -> TaggedPoints:
    """Keep the first-inserted point of every occupied ``v_down`` voxel.

    The grid is anchored at the world origin with half-open cells and the
    output is ordered by voxel key, z-major.
    """
    return voxel_downsample_with_keys(points, v_down)[0]


def point_segment_distance(p, a, b) -> float:
    return float(points_segment_distance(as_array(p)[None, :], a, b)[0])


def points_segment_distance(points: np.ndarray, a, b) -> np.ndarray:
    """Distance from each point to segment ``ab`` using the acute/obtuse rule.

    When both end angles are acute the perpendicular distance to the line is
    used, otherwise the distance to the endpoint at the obtuse angle.
    """
    a = as_array(a)
    b = as_array(b)
    # fixed endpoint order makes the result bit-identical under swapping a, b
    if tuple(b) < tuple(a):
        a, b = b, a
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    ab = b - a
    ab2 = float(ab @ ab)
    pa = pts - a
    if ab2 == 0.0:
        return np.sqrt(np.einsum("ij,ij->i", pa, pa))
    pb = pts - b
    at_a = pa @ ab
    at_b = -(pb @ ab)
    da = np.sqrt(np.einsum("ij,ij->i", pa, pa))
    db = np.sqrt(np.einsum("ij,ij->i", pb, pb))
    cross = np.cross(pa, ab)
    perp = np.sqrt(np.einsum("ij,ij->i", cross, cross) / ab2)
    # rounding can push the perpendicular distance a hair past the endpoint one
    perp = np.minimum(perp, np.minimum(da, db))
    return np.where(at_a < 0, da, np.where(at_b < 0, db, perp))


def knn_keyframes(store: MapStore, query, k: int) -> list[int]:
    """Ids of the ``k`` keyframes closest to ``query``; ties go to smaller id."""
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if len(store) == 0:
        return []
    d = distances(store.positions, query)
    ids = np.arange(len(d))
    order = np.lexsort((ids, d))
    return [int(i) for i in order[:k]]


def centroid(points) -> Point3:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ParameterError("centroid of an empty point set")
    return Point3.of(pts.mean(axis=0))
