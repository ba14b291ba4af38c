"""Episode loop, greedy baseline and ground-truth coverage metrics."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import MapStore, as_array, distances, knn_keyframes
from .errors import CollisionError, StateError
from .frontier_graph import FrontierGraph, build_frontier_graph
from .graph import KeyframeGraph, build_submap, shortest_path, update_graph
from .planner import DoneDecision, GlobalDecision, LocalDecision, SelectedFrontier, local_plan, los_decision, plan
from .scenario import ScenarioConfig, build_environment
from .sensor_sim import Environment, KeyframePolicy, RobotState, maybe_generate_keyframe, raycast_scan, step_robot
from .ser import SER, DownsampledMap, SerSet, generate_sers, min_keyframe_distance

log = logging.getLogger(__name__)

STALL_LIMIT = 3
PROGRESS_WINDOW = 20  # steps without getting closer to the local goal count as a stall
PROGRESS_EPS = 0.05
NODE_TOL = 0.5
# the robot keeps this multiple of r_safe from walls so that chords between
# consecutive keyframes still clear r_safe when it rounds a corner
LOCAL_CLEARANCE_FACTOR = 2.0


class CoverageTracker:
    """Reachable free voxels whose centres lie within ``zeta`` of a keyframe."""

    def __init__(self, env: Environment, zeta: float):
        self.env = env
        self.zeta = zeta
        self.centers = env.voxel_centers(env.free_reachable)
        self.covered = np.zeros(len(self.centers), dtype=bool)

    def add(self, position) -> None:
        self.covered |= distances(self.centers, position) <= self.zeta

    @property
    def volume(self) -> float:
        return float(self.covered.sum()) * self.env.voxel_size**3

    @property
    def fraction(self) -> float:
        return float(self.covered.sum()) / max(len(self.centers), 1)


def explored_volume(env: Environment, keyframes, zeta: float) -> float:
    """Volume (m^3) of reachable free voxels within ``zeta`` of any keyframe."""
    if env.free_reachable is None:
        raise StateError("environment has no reachable set; load it with a start pose")
    kfs = [kf.position.array if hasattr(kf, "position") else as_array(kf) for kf in keyframes]
    if not kfs:
        return 0.0
    centers = env.voxel_centers(env.free_reachable)
    n = int((min_keyframe_distance(centers, np.array(kfs)) <= zeta).sum())
    return n * env.voxel_size**3


@dataclass
class MetricsRow:
    step: int
    time_s: float
    explored_volume_m3: float
    volume_increment_m3_s: float
    distance_traveled_m: float
    n_sers: int
    decision: str
    selected_ser_id: int | None
    anchor_keyframe_id: int | None
    coverage_fraction: float = 0.0
    decision_index: int | None = None


@dataclass
class DecisionRecord:
    index: int
    step: int
    keyframe_id: int
    kind: str
    ser_id: int | None = None
    anchor_keyframe_id: int | None = None
    los: bool | None = None
    path: tuple[int, ...] | None = None
    ser_keyframe_ids: tuple[int, ...] = ()
    score: float | None = None
    warning: bool = False


@dataclass
class EpisodeMetrics:
    planner: str
    rows: list[MetricsRow] = field(default_factory=list)
    status: str = "running"  # done | budget | collision
    coverage_fraction: float = 0.0
    total_path_length: float = 0.0
    global_plan_count: int = 0
    stall_count: int = 0
    done_warning: bool = False
    failure: str | None = None
    steps: int = 0

    def distance_at_coverage(self, fraction: float) -> float:
        """Distance travelled at the first keyframe row reaching ``fraction`` coverage."""
        for r in self.rows:
            if r.coverage_fraction >= fraction:
                return r.distance_traveled_m
        return float("inf")


@dataclass
class EpisodeResult:
    metrics: EpisodeMetrics
    decisions: list[DecisionRecord]
    log_records: list[dict]
    store: MapStore
    graph: KeyframeGraph
    env: Environment
    wall_time_s: float = 0.0


def _ser_overlap(keys: np.ndarray, sers: SerSet) -> SER | None:
    best, best_n = None, 0
    for s in sers:
        n = int(np.isin(s.keys, keys, assume_unique=True).sum())
        if n > best_n:
            best, best_n = s, n
    return best


class Episode:
    """One exploration run over a scenario.

    Per step the robot moves toward the current waypoint; when a keyframe
    triggers the map, SERs, keyframe graph and frontier graph are rebuilt,
    the active target is refreshed and a metrics row is recorded. A new
    frontier is only selected once the current one is reached or vanishes.

    ``observer`` is called as ``observer(episode)`` after every keyframe
    update, before planning.
    """

    def __init__(self, cfg: ScenarioConfig, env: Environment | None = None, observer=None):
        self.cfg = cfg
        self.env = env if env is not None else build_environment(cfg)
        self.observer = observer
        self.greedy = cfg.planner_kind == "greedy_baseline"
        self.rng = np.random.default_rng(cfg.seed)
        self.policy = KeyframePolicy(cfg.d_key)
        self.local_cfg = replace(cfg.graph, r_safe=cfg.graph.r_safe * LOCAL_CLEARANCE_FACTOR)
        self.store = MapStore()
        self.graph = KeyframeGraph()
        self.dmap = DownsampledMap(cfg.ser.v_down)
        self.coverage = CoverageTracker(self.env, cfg.ser.zeta_coverage)
        self.state = RobotState(cfg.start)
        self.sers: SerSet | None = None
        self.gf = FrontierGraph()
        self.metrics = EpisodeMetrics(planner=cfg.planner_kind)
        self.decisions: list[DecisionRecord] = []
        self.log_records: list[dict] = []
        # navigation state
        self.decision = None
        self.target_ser: SER | None = None
        self.target: np.ndarray | None = None
        self.path_queue: list[int] = []
        self.escalated = False
        self.stalls = 0
        self.best_goal_dist = np.inf
        self.since_progress = 0
        self.abandoned = np.empty(0, dtype=np.int64)
        self._submap_cache: tuple | None = None

    # -- map update ------------------------------------------------------
    def _keyframe_event(self, force_replan: bool = False) -> None:
        pose = self.state.pose
        scan = raycast_scan(self.env, pose, self.cfg.sensor, noise_sigma=self.cfg.noise_sigma, rng=self.rng)
        kf = self.store.append(pose.position, self.state.step, scan.points)
        self.coverage.add(kf.position.array)
        self.sers = generate_sers(self.store, self.cfg.ser, self.dmap, step=self.state.step)
        update_graph(self.graph, self.store, kf, self.cfg.graph)
        self.gf = build_frontier_graph(
            self.sers, self.store, self.cfg.ser.v_down, self.cfg.contribution_on_raw_points
        )
        if self.observer is not None:
            self.observer(self)
        replan = force_replan or self.decision is None
        if not replan and self.target_ser is not None:
            replan = not self._refresh_target()
        if replan:
            self._replan()
        self._record_row(kf.id)

    def _refresh_target(self) -> bool:
        """Follow the active SER into the new SerSet; False if it vanished."""
        match = _ser_overlap(self.target_ser.keys, self.sers)
        if match is None:
            return False
        self.target_ser = match
        if not np.array_equal(self.target, match.frontier.array):
            self.target = match.frontier.array
            self._reset_progress()
        return True

    # -- planning ----------------------------------------------------------
    def _excluded(self) -> set[int]:
        pos = self.state.position
        out = set()
        for s in self.sers:
            if np.linalg.norm(s.frontier.array - pos) <= self.cfg.planner.reach_radius:
                out.add(s.id)
            elif self.abandoned.size and np.isin(s.keys, self.abandoned).mean() >= 0.5:
                out.add(s.id)
        return out

    def _replan(self) -> None:
        exclude = self._excluded()
        if self.greedy:
            decision = self._greedy_decision(exclude)
        else:
            decision = plan(self.sers, self.graph, self.gf, self.store, self.state, self.cfg.planner, self.cfg.graph, exclude)
        self._adopt(decision)

    def _greedy_decision(self, exclude):
        pos = self.state.position
        cands = [s for s in self.sers if s.id not in exclude]
        if not cands:
            return DoneDecision()
        best = min(cands, key=lambda s: (float(np.linalg.norm(s.frontier.array - pos)), s.id))
        sel = SelectedFrontier(best.id, best.frontier, -float(np.linalg.norm(best.frontier.array - pos)))
        return LocalDecision(best.frontier, sel)

    def _adopt(self, decision) -> None:
        kf = self.store.latest
        rec = DecisionRecord(len(self.decisions), self.state.step, kf.id, decision.kind)
        self.decision = decision
        self.escalated = False
        self._reset_progress()
        if isinstance(decision, DoneDecision):
            rec.warning = decision.warning
            self.target_ser = None
            self.target = None
            self.path_queue = []
        else:
            ser = self.sers[decision.selected.ser_id]
            self.target_ser = ser
            self.target = ser.frontier.array
            rec.ser_id = ser.id
            rec.score = decision.selected.score
            rec.los = los_decision(ser, self.store.scans[kf.id])
            rec.ser_keyframe_ids = tuple(int(i) for i in np.unique(ser.points.keyframe_ids))
            if isinstance(decision, GlobalDecision):
                self.path_queue = list(decision.path.node_ids)
                rec.anchor_keyframe_id = decision.anchor_keyframe_id
                rec.path = decision.path.node_ids
                self.metrics.global_plan_count += 1
            else:
                self.path_queue = []
                rec.anchor_keyframe_id = self._anchor_of(ser.id)
        self.decisions.append(rec)

    def _anchor_of(self, ser_id: int) -> int | None:
        for e in self.gf.entries:
            if e.ser_id == ser_id:
                return e.anchor_keyframe_id
        return None

    # -- navigation ------------------------------------------------------
    def _submap(self):
        ids = tuple(sorted(knn_keyframes(self.store, self.state.position, self.cfg.graph.k)))
        if self._submap_cache is None or self._submap_cache[0] != ids:
            self._submap_cache = (ids, build_submap(self.store, self.state.position, self.cfg.graph.k))
        return self._submap_cache[1]

    def _reset_progress(self) -> None:
        self.stalls = 0
        self.best_goal_dist = np.inf
        self.since_progress = 0

    def _goal(self) -> np.ndarray:
        pos = self.state.position
        while self.path_queue:
            node = self.graph.positions[self.path_queue[0]]
            if np.linalg.norm(node - pos) > NODE_TOL:
                return node
            self.path_queue.pop(0)
            self._reset_progress()
        return self.target

    def _next_waypoint(self) -> np.ndarray:
        goal = self._goal()
        wp = local_plan(self.state, goal, self._submap(), self.local_cfg)
        stalled = np.array_equal(wp, self.state.position) and not np.array_equal(wp, goal)
        d = float(np.linalg.norm(goal - self.state.position))
        if d < self.best_goal_dist - PROGRESS_EPS:
            self.best_goal_dist = d
            self.since_progress = 0
        else:
            self.since_progress += 1
        self.stalls = self.stalls + 1 if stalled else 0
        if self.stalls >= STALL_LIMIT or self.since_progress >= PROGRESS_WINDOW:
            self._escalate()
            return self.state.position
        return wp

    def _escalate(self) -> None:
        """Stuck: route through the keyframe graph, or give the target up."""
        self.metrics.stall_count += 1
        self._reset_progress()
        if not self.escalated and not self.path_queue:
            if self.greedy:
                anchor = knn_keyframes(self.store, self.target, 1)[0]
            else:
                anchor = self._anchor_of(self.target_ser.id)
            path = None if anchor is None else shortest_path(self.graph, self.store.latest.id, anchor)
            if path is not None and len(path.node_ids) > 1:
                self.escalated = True
                self.path_queue = list(path.node_ids)
                log.debug("step %d: escalating to graph path %s", self.state.step, path.node_ids)
                return
        log.debug("step %d: abandoning SER %d", self.state.step, self.target_ser.id)
        self.abandoned = np.union1d(self.abandoned, self.target_ser.keys)
        self._replan()

    def _reached(self) -> bool:
        if self.target is None or self.path_queue:
            return False
        return float(np.linalg.norm(self.target - self.state.position)) <= self.cfg.planner.reach_radius

    # -- bookkeeping -----------------------------------------------------
    def _record_row(self, kf_id: int) -> None:
        m = self.metrics
        t = self.state.step * self.cfg.dt
        vol = self.coverage.volume
        if m.rows:
            prev = m.rows[-1]
            inc = (vol - prev.explored_volume_m3) / (t - prev.time_s)
        else:
            inc = 0.0
        rec = self.decisions[-1]
        ser_id = self.target_ser.id if self.target_ser is not None else None
        if rec.kind == "GLOBAL":
            anchor = rec.anchor_keyframe_id
        elif ser_id is not None:
            anchor = self._anchor_of(ser_id)
        else:
            anchor = None
        m.rows.append(
            MetricsRow(
                step=self.state.step,
                time_s=t,
                explored_volume_m3=vol,
                volume_increment_m3_s=inc,
                distance_traveled_m=self.state.distance_traveled,
                n_sers=len(self.sers),
                decision=rec.kind,
                selected_ser_id=ser_id,
                anchor_keyframe_id=anchor,
                coverage_fraction=self.coverage.fraction,
                decision_index=rec.index,
            )
        )
        self.log_records.append(self._log_record(kf_id, rec))

    def _log_record(self, kf_id: int, rec: DecisionRecord) -> dict:
        r6 = lambda xs: [round(float(x), 6) for x in xs]  # noqa: E731
        return {
            "step": self.state.step,
            "keyframe_id": kf_id,
            "position": r6(self.store.keyframes[kf_id].position),
            "graph_edges": [[a, b, round(w, 6)] for a, b, w in self.graph.edges],
            "frontier_graph": [
                {"ser_id": e.ser_id, "frontier": r6(e.frontier), "anchor_keyframe_id": e.anchor_keyframe_id}
                for e in self.gf.entries
            ],
            "decision": {
                "index": rec.index,
                "kind": rec.kind,
                "step": rec.step,
                "keyframe_id": rec.keyframe_id,
                "ser_id": rec.ser_id,
                "anchor_keyframe_id": rec.anchor_keyframe_id,
                "los": rec.los,
                "path": list(rec.path) if rec.path is not None else None,
                "ser_keyframe_ids": list(rec.ser_keyframe_ids),
                "warning": rec.warning,
            },
        }

    def _finish(self, status: str, failure: str | None = None) -> None:
        m = self.metrics
        m.status = status
        m.failure = failure
        m.coverage_fraction = self.coverage.fraction
        m.total_path_length = self.state.distance_traveled
        m.steps = self.state.step
        if isinstance(self.decision, DoneDecision):
            m.done_warning = self.decision.warning

    # -- main loop ---------------------------------------------------------
    def run(self) -> EpisodeResult:
        t0 = time.perf_counter()
        self._keyframe_event()
        last_kf = self.store.latest.position
        while True:
            if isinstance(self.decision, DoneDecision):
                self._finish("done")
                break
            if self.state.step >= self.cfg.step_budget:
                self._finish("budget")
                break
            waypoint = self._next_waypoint()
            if isinstance(self.decision, DoneDecision):
                continue
            try:
                self.state = step_robot(self.state, waypoint, self.cfg.dt, self.cfg.v_max, self.env)
            except CollisionError as exc:
                self._finish("collision", str(exc))
                log.warning("%s: %s", self.cfg.name, exc)
                break
            reached = self._reached()
            moved = float(np.linalg.norm(self.state.position - last_kf.array))
            if maybe_generate_keyframe(self.state, last_kf, self.policy) or (reached and moved > 0):
                self._keyframe_event(force_replan=reached)
                last_kf = self.store.latest.position
            elif reached:
                self._replan()
        return EpisodeResult(
            self.metrics, self.decisions, self.log_records, self.store, self.graph, self.env,
            wall_time_s=time.perf_counter() - t0,
        )


def run_episode(scenario: ScenarioConfig, env: Environment | None = None, observer=None) -> EpisodeResult:
    """Run the planner named by ``scenario.planner_kind``."""
    return Episode(scenario, env, observer).run()


def run_baseline_greedy(scenario: ScenarioConfig, env: Environment | None = None, observer=None) -> EpisodeResult:
    """Nearest-frontier baseline: straight-line distance only, always local planning."""
    return Episode(scenario.with_planner("greedy_baseline"), env, observer).run()
