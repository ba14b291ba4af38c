"""Voxel world, raycast LiDAR, point-robot kinematics and keyframe trigger."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .core import Point3, Pose, Scan, as_array
from .errors import CollisionError, ParameterError, StateError


class Environment:
    """Boolean occupancy grid over an axis-aligned box.

    Voxel ``(i, j, k)`` spans ``bounds_min + [i, i+1) * voxel_size`` on each
    axis. Everything outside the bounds counts as solid for the robot and as
    empty space for rays (which simply stop returning).
    """

    def __init__(self, voxel_size: float, bounds_min, occupied: np.ndarray, start=None):
        if not voxel_size > 0:
            raise ParameterError("voxel_size must be positive")
        self.voxel_size = float(voxel_size)
        self.bounds_min = as_array(bounds_min)
        self.occupied = np.asarray(occupied, dtype=bool)
        if self.occupied.ndim != 3:
            raise ParameterError("occupancy grid must be 3-D")
        self.shape = self.occupied.shape
        self.bounds_max = self.bounds_min + np.array(self.shape) * self.voxel_size
        self.free_reachable: np.ndarray | None = None
        self.start_voxel: tuple[int, int, int] | None = None
        if start is not None:
            self.compute_reachable(start)

    @classmethod
    def from_boxes(cls, voxel_size, bounds_min, bounds_max, solid=(), carve=(), fill_solid=False, start=None):
        """Rasterise boxes: a voxel belongs to a box when its centre lies inside it.

        ``solid`` boxes are applied first, then ``carve`` boxes clear voxels.
        """
        bmin = as_array(bounds_min)
        bmax = as_array(bounds_max)
        if np.any(bmax <= bmin):
            raise ParameterError("bounds_max must exceed bounds_min on every axis")
        shape = tuple(int(n) for n in np.ceil((bmax - bmin) / voxel_size - 1e-9))
        occ = np.full(shape, bool(fill_solid))
        env = cls(voxel_size, bmin, occ)
        for box in solid:
            env._paint(box, True)
        for box in carve:
            env._paint(box, False)
        if start is not None:
            env.compute_reachable(start)
        return env

    def _box_slices(self, box):
        lo = np.asarray(box[:3], dtype=float)
        hi = np.asarray(box[3:], dtype=float)
        a = np.ceil((lo - self.bounds_min) / self.voxel_size - 0.5 - 1e-9).astype(int)
        b = np.floor((hi - self.bounds_min) / self.voxel_size - 0.5 + 1e-9).astype(int)
        a = np.clip(a, 0, self.shape)
        b = np.clip(b + 1, 0, self.shape)
        return tuple(slice(int(i), int(j)) for i, j in zip(a, b))

    def _paint(self, box, value: bool) -> None:
        self.occupied[self._box_slices(box)] = value

    def voxel_index(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.floor((pts - self.bounds_min) / self.voxel_size).astype(np.int64)

    def in_bounds(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx).reshape(-1, 3)
        return np.all((idx >= 0) & (idx < np.array(self.shape)), axis=1)

    def is_blocked(self, point) -> bool:
        """True when ``point`` is in an occupied voxel or outside the bounds."""
        idx = self.voxel_index(point)
        if not self.in_bounds(idx)[0]:
            return True
        return bool(self.occupied[tuple(idx[0])])

    def voxel_centers(self, mask: np.ndarray) -> np.ndarray:
        idx = np.argwhere(mask)
        return self.bounds_min + (idx + 0.5) * self.voxel_size

    def compute_reachable(self, start) -> np.ndarray:
        """Flood-fill free space (6-connected) from the start voxel, once."""
        if self.is_blocked(start):
            raise StateError(f"start {tuple(as_array(start))} is not in free space")
        idx = tuple(int(i) for i in self.voxel_index(start)[0])
        labels, _ = ndimage.label(~self.occupied)
        self.free_reachable = labels == labels[idx]
        self.start_voxel = idx
        return self.free_reachable

    @property
    def reachable_count(self) -> int:
        if self.free_reachable is None:
            raise StateError("reachable set not computed")
        return int(self.free_reachable.sum())


@dataclass(frozen=True)
class SensorModel:
    hfov: float = 360.0
    vfov: float = 45.0
    channels: int = 32
    azimuth_steps: int = 512
    max_range: float = 80.0

    def __post_init__(self) -> None:
        problems = []
        if not 0 < self.hfov <= 360:
            problems.append("hfov must be in (0, 360]")
        if not 0 < self.vfov <= 180:
            problems.append("vfov must be in (0, 180]")
        if self.channels < 1:
            problems.append("channels must be >= 1")
        if self.azimuth_steps < 1:
            problems.append("azimuth_steps must be >= 1")
        if not self.max_range > 0:
            problems.append("max_range must be positive")
        if problems:
            raise ParameterError("; ".join(problems))

    def ray_directions(self, yaw: float) -> np.ndarray:
        """Unit ray directions, elevation-major then azimuth."""
        h = math.radians(self.hfov)
        az = yaw - h / 2 + (np.arange(self.azimuth_steps) + 0.5) * h / self.azimuth_steps
        if self.channels == 1:
            el = np.zeros(1)
        else:
            v = math.radians(self.vfov)
            el = np.linspace(-v / 2, v / 2, self.channels)
        el_g, az_g = np.meshgrid(el, az, indexing="ij")
        el_g = el_g.ravel()
        az_g = az_g.ravel()
        return np.stack(
            [np.cos(el_g) * np.cos(az_g), np.cos(el_g) * np.sin(az_g), np.sin(el_g)], axis=1
        )


def cast_rays(env: Environment, origin, dirs: np.ndarray, max_range: float) -> np.ndarray:
    """Voxel DDA for many rays at once.

    Returns the entry distance into the first occupied voxel per ray, or
    ``inf`` when the ray leaves the grid or passes ``max_range`` first.
    """
    o = as_array(origin)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    n = len(dirs)
    vs = env.voxel_size
    rel = (o - env.bounds_min) / vs
    cell = np.tile(np.floor(rel).astype(np.int64), (n, 1))
    step = np.sign(dirs).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = np.where(dirs != 0, vs / np.abs(dirs), np.inf)
        frac = np.where(step > 0, np.floor(rel) + 1 - rel, rel - np.floor(rel))
        t_max = np.where(dirs != 0, frac * t_delta, np.inf)
    hit_t = np.full(n, np.inf)
    active = np.arange(n)
    shape = np.array(env.shape)
    occ = env.occupied
    while active.size:
        tm = t_max[active]
        axis = np.argmin(tm, axis=1)
        rows = np.arange(active.size)
        t = tm[rows, axis]
        keep = t <= max_range
        active, axis, t, rows = active[keep], axis[keep], t[keep], rows[keep]
        cell[active, axis] += step[active, axis]
        t_max[active, axis] += t_delta[active, axis]
        c = cell[active]
        inside = np.all((c >= 0) & (c < shape), axis=1)
        active, t, c = active[inside], t[inside], c[inside]
        hit = occ[c[:, 0], c[:, 1], c[:, 2]]
        hit_t[active[hit]] = t[hit]
        active = active[~hit]
    return hit_t


def raycast_scan(
    env: Environment,
    pose: Pose,
    sensor: SensorModel,
    keyframe_id: int = -1,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Scan:
    """Simulate one LiDAR sweep from ``pose``; returns world-frame hit points."""
    origin = as_array(pose.position)
    if env.is_blocked(origin):
        raise StateError(f"sensor origin {tuple(origin)} is inside an occupied voxel")
    dirs = sensor.ray_directions(pose.yaw)
    t = cast_rays(env, origin, dirs, sensor.max_range)
    hit = np.isfinite(t)
    t = t[hit]
    if noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        t = t + rng.normal(0.0, noise_sigma, size=t.shape)
    pts = origin + dirs[hit] * t[:, None]
    return Scan(keyframe_id, pts)


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    speed: float = 0.0
    distance_traveled: float = 0.0
    step: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.pose.position.array


@dataclass(frozen=True)
class KeyframePolicy:
    d_key: float = 2.0

    def __post_init__(self) -> None:
        if not self.d_key > 0:
            raise ParameterError("d_key must be positive")


def maybe_generate_keyframe(state: RobotState, last_kf_position, policy: KeyframePolicy) -> bool:
    if last_kf_position is None:
        return True
    moved = float(np.linalg.norm(state.position - as_array(last_kf_position)))
    return moved >= policy.d_key


def step_robot(state: RobotState, waypoint, dt: float, v_max: float, env: Environment | None = None) -> RobotState:
    """Move at most ``v_max * dt`` straight toward ``waypoint``.

    Yaw follows the horizontal bearing to the waypoint and is left alone for
    purely vertical moves. With ``env`` given, landing in a blocked voxel
    raises :class:`CollisionError`.
    """
    if not dt > 0 or not v_max > 0:
        raise ParameterError("dt and v_max must be positive")
    pos = state.position
    delta = as_array(waypoint) - pos
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        return replace(state, speed=0.0, step=state.step + 1)
    travel = min(dist, v_max * dt)
    new_pos = pos + delta * (travel / dist) if travel < dist else as_array(waypoint)
    yaw = state.pose.yaw
    if delta[0] != 0.0 or delta[1] != 0.0:
        yaw = math.atan2(delta[1], delta[0])
    if env is not None and env.is_blocked(new_pos):
        raise CollisionError(f"robot collided at {tuple(np.round(new_pos, 3))} on step {state.step + 1}")
    return RobotState(
        pose=Pose(Point3.of(new_pos), yaw),
        speed=travel / dt,
        distance_traveled=state.distance_traveled + travel,
        step=state.step + 1,
    )
