"""Exploration scoring, LOS/NLOS switching and the straight-line local planner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import MapStore, Point3, Scan, as_array, distances, wrap_angle
from .errors import ParameterError
from .frontier_graph import FrontierGraph
from .graph import GraphConfig, KeyframeGraph, Path, Submap, collision_free, shortest_path
from .sensor_sim import RobotState
from .ser import SER, SerSet


@dataclass(frozen=True)
class PlannerConfig:
    w_vol: float = 1.0
    w_dir: float = 1.0
    w_dis: float = 1.0
    reach_radius: float = 3.5
    eps_dist: float = 0.1

    def __post_init__(self) -> None:
        bad = [k for k, v in vars(self).items() if not v > 0]
        if bad:
            raise ParameterError("planner fields must be positive: " + ", ".join(bad))


@dataclass(frozen=True)
class SelectedFrontier:
    ser_id: int
    frontier: Point3
    score: float


@dataclass(frozen=True)
class LocalDecision:
    target: Point3
    selected: SelectedFrontier
    kind: str = field(default="LOCAL", init=False)


@dataclass(frozen=True)
class GlobalDecision:
    path: Path
    terminal_target: Point3
    selected: SelectedFrontier
    anchor_keyframe_id: int
    kind: str = field(default="GLOBAL", init=False)


@dataclass(frozen=True)
class DoneDecision:
    warning: bool = False
    kind: str = field(default="DONE", init=False)


PlanDecision = LocalDecision | GlobalDecision | DoneDecision


def direction_factor(robot_position, robot_yaw: float, frontier) -> float:
    """1 + |yaw error| / pi, using the horizontal bearing to the frontier."""
    d = as_array(frontier) - as_array(robot_position)
    if d[0] == 0.0 and d[1] == 0.0:
        return 1.0
    bearing = math.atan2(d[1], d[0])
    return 1.0 + abs(wrap_angle(bearing - robot_yaw)) / math.pi


def exploration_score(ser: SER, robot: RobotState, current_kf_position, cfg: PlannerConfig) -> float:
    volume = ser.volume
    dist = max(float(np.linalg.norm(as_array(current_kf_position) - ser.frontier.array)), cfg.eps_dist)
    direction = direction_factor(robot.position, robot.pose.yaw, ser.frontier)
    return (cfg.w_vol * volume) / (cfg.w_dir * direction * cfg.w_dis * dist)


def ranked_frontiers(sers: SerSet, robot: RobotState, current_kf_position, cfg: PlannerConfig, exclude=()) -> list[SelectedFrontier]:
    """All SERs by descending score; equal scores keep ascending id order."""
    scored = [
        SelectedFrontier(s.id, s.frontier, exploration_score(s, robot, current_kf_position, cfg))
        for s in sers
        if s.id not in exclude
    ]
    return sorted(scored, key=lambda f: (-f.score, f.ser_id))


def select_best_frontier(sers: SerSet, robot: RobotState, current_kf_position, cfg: PlannerConfig, exclude=()) -> SelectedFrontier | None:
    ranked = ranked_frontiers(sers, robot, current_kf_position, cfg, exclude)
    return ranked[0] if ranked else None


def los_decision(best: SER, current_scan: Scan) -> bool:
    """Whether any SER point came from the current keyframe's scan."""
    return bool(np.any(best.points.keyframe_ids == current_scan.keyframe_id))


def plan(
    sers: SerSet,
    g: KeyframeGraph,
    gf: FrontierGraph,
    store: MapStore,
    robot: RobotState,
    cfg: PlannerConfig,
    graph_cfg: GraphConfig | None = None,
    exclude=(),
) -> PlanDecision:
    """Pick the best frontier and choose local (LOS) or graph (NLOS) planning.

    When the anchor keyframe of a NLOS frontier is unreachable in ``g`` the
    next-best frontier is tried. ``exclude`` lists SER ids not to consider.
    """
    kf = store.latest
    ranked = ranked_frontiers(sers, robot, kf.position.array, cfg, exclude)
    if not ranked:
        return DoneDecision(warning=False)
    scan = store.scans[kf.id]
    for sel in ranked:
        ser = sers[sel.ser_id]
        if los_decision(ser, scan):
            return LocalDecision(sel.frontier, sel)
        anchor = gf.find_anchor(sel.ser_id)
        path = shortest_path(g, kf.id, anchor)
        if path is not None:
            return GlobalDecision(path, sel.frontier, sel, anchor)
    return DoneDecision(warning=True)


def _detour_directions() -> np.ndarray:
    dirs = []
    for pitch in (0.0, math.radians(30), -math.radians(30)):
        for i in range(16):
            az = i * math.radians(22.5)
            dirs.append((math.cos(pitch) * math.cos(az), math.cos(pitch) * math.sin(az), math.sin(pitch)))
    return np.array(dirs)


DETOUR_DIRECTIONS = _detour_directions()


def local_plan(robot, target, env_map_points: Submap, graph_cfg: GraphConfig) -> np.ndarray:
    """Next waypoint: the target if the straight segment is clear, else the best detour.

    Detours are fixed-length steps of ``2 * r_safe`` along a compass of 16
    headings at three pitches. Returns the current position when every
    candidate is blocked. A robot already closer than ``r_safe`` to the map
    may take any segment that does not bring it closer still.
    """
    pos = robot.position if isinstance(robot, RobotState) else as_array(robot)
    tgt = as_array(target)
    if np.array_equal(pos, tgt):
        return tgt
    r = graph_cfg.r_safe
    pts = env_map_points.points
    if len(pts):
        here = float(distances(pts, pos).min())
        if here <= r:
            r = here - 1e-6
    if collision_free(pos, tgt, env_map_points, r):
        return tgt
    step = 2.0 * graph_cfg.r_safe
    near = pts[distances(pts, pos) <= step + r + 1e-9]
    local = Submap(near, env_map_points.source_keyframe_ids)
    best, best_d = None, math.inf
    for d in DETOUR_DIRECTIONS:
        cand = pos + step * d
        if not collision_free(pos, cand, local, r):
            continue
        dd = float(np.linalg.norm(tgt - cand))
        if dd < best_d:
            best, best_d = cand, dd
    return pos.copy() if best is None else best
