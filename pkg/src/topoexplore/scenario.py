"""Scenario files: a small sectioned ``key = value`` text format.

Example::

    # comments start with '#'
    [environment]
    voxel_size = 0.5
    bounds_min = -2 -4 0
    bounds_max = 64 4 4
    fill = solid                  # or: empty
    carve = 0 -2 0 60 2 4         # box to clear: min xyz, max xyz (repeatable)
    solid = 20 -2 0 21 2 4        # box to fill (repeatable, applied before carve)

    [start]
    position = 1 0 2
    yaw = 0

Other sections are ``sensor``, ``robot``, ``ser``, ``graph``, ``planner``
and ``run``; see :data:`FIELDS` for every key and its default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath

from .core import Point3, Pose
from .errors import ParameterError, ScenarioError, StateError
from .graph import GraphConfig
from .planner import PlannerConfig
from .sensor_sim import Environment, SensorModel
from .ser import SerConfig

PLANNER_KINDS = ("proposed", "greedy_baseline")
_PLANNER_ALIASES = {"proposed": "proposed", "greedy": "greedy_baseline", "greedy_baseline": "greedy_baseline"}

# section -> key -> (type, default); None default means required
FIELDS: dict[str, dict[str, tuple[str, object]]] = {
    "environment": {
        "voxel_size": ("float", None),
        "bounds_min": ("vec3", None),
        "bounds_max": ("vec3", None),
        "fill": ("fill", "empty"),
    },
    "start": {"position": ("vec3", None), "yaw": ("float", 0.0)},
    "sensor": {
        "hfov": ("float", 360.0),
        "vfov": ("float", 45.0),
        "channels": ("int", 32),
        "azimuth_steps": ("int", 512),
        "max_range": ("float", 80.0),
        "noise_sigma": ("float", 0.0),
    },
    "robot": {"v_max": ("float", 2.0), "dt": ("float", 0.5), "d_key": ("float", 2.0)},
    "ser": {
        "zeta_coverage": ("float", 7.0),
        "v_down": ("float", 2.0),
        "cluster_tol": ("float", None),
        "min_cluster_size": ("int", 3),
    },
    "graph": {"k": ("int", 10), "r_safe": ("float", 0.6)},
    "planner": {
        "w_vol": ("float", 1.0),
        "w_dir": ("float", 1.0),
        "w_dis": ("float", 1.0),
        "reach_radius": ("float", None),
        "eps_dist": ("float", 0.1),
        "contribution_on_raw_points": ("bool", False),
    },
    "run": {
        "step_budget": ("int", 3000),
        "seed": ("int", 0),
        "planner": ("planner", "proposed"),
    },
}
_BOX_KEYS = {"solid", "carve"}
# keys whose absence is filled from other fields rather than being an error
_DERIVED = {("ser", "cluster_tol"), ("planner", "reach_radius")}


@dataclass(frozen=True)
class EnvironmentSpec:
    voxel_size: float
    bounds_min: tuple[float, float, float]
    bounds_max: tuple[float, float, float]
    fill: str = "empty"
    solid: tuple[tuple[float, ...], ...] = ()
    carve: tuple[tuple[float, ...], ...] = ()

    def build(self, start=None) -> Environment:
        return Environment.from_boxes(
            self.voxel_size,
            self.bounds_min,
            self.bounds_max,
            solid=self.solid,
            carve=self.carve,
            fill_solid=self.fill == "solid",
            start=start,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    environment: EnvironmentSpec
    start: Pose
    sensor: SensorModel = field(default_factory=SensorModel)
    noise_sigma: float = 0.0
    v_max: float = 2.0
    dt: float = 0.5
    d_key: float = 2.0
    ser: SerConfig = field(default_factory=SerConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    contribution_on_raw_points: bool = False
    step_budget: int = 3000
    seed: int = 0
    planner_kind: str = "proposed"
    path: str | None = None

    def with_planner(self, kind: str) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, planner_kind=_PLANNER_ALIASES[kind])

    def with_seed(self, seed: int) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, seed=int(seed))

    def to_text(self) -> str:
        """Serialise back to the scenario text format."""
        e = self.environment
        v = lambda xs: " ".join(_fmt(x) for x in xs)  # noqa: E731
        lines = [f"# {self.name}", "[environment]", f"voxel_size = {_fmt(e.voxel_size)}"]
        lines += [f"bounds_min = {v(e.bounds_min)}", f"bounds_max = {v(e.bounds_max)}", f"fill = {e.fill}"]
        lines += [f"solid = {v(b)}" for b in e.solid] + [f"carve = {v(b)}" for b in e.carve]
        p = self.start.position
        lines += ["", "[start]", f"position = {v(p)}", f"yaw = {_fmt(self.start.yaw)}"]
        s = self.sensor
        lines += ["", "[sensor]"] + [
            f"{k} = {_fmt(getattr(s, k))}" for k in ("hfov", "vfov", "channels", "azimuth_steps", "max_range")
        ]
        lines += [f"noise_sigma = {_fmt(self.noise_sigma)}"]
        lines += ["", "[robot]", f"v_max = {_fmt(self.v_max)}", f"dt = {_fmt(self.dt)}", f"d_key = {_fmt(self.d_key)}"]
        lines += ["", "[ser]"] + [
            f"{k} = {_fmt(getattr(self.ser, k))}" for k in ("zeta_coverage", "v_down", "cluster_tol", "min_cluster_size")
        ]
        lines += ["", "[graph]", f"k = {self.graph.k}", f"r_safe = {_fmt(self.graph.r_safe)}"]
        lines += ["", "[planner]"] + [
            f"{k} = {_fmt(getattr(self.planner, k))}" for k in ("w_vol", "w_dir", "w_dis", "reach_radius", "eps_dist")
        ]
        lines += [f"contribution_on_raw_points = {str(self.contribution_on_raw_points).lower()}"]
        lines += ["", "[run]", f"step_budget = {self.step_budget}", f"seed = {self.seed}", f"planner = {self.planner_kind}"]
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _convert(kind: str, raw: str):
    if kind == "float":
        x = float(raw)
        if not math.isfinite(x):
            raise ValueError("not finite")
        return x
    if kind == "int":
        return int(raw)
    if kind == "vec3":
        parts = raw.split()
        if len(parts) != 3:
            raise ValueError("expected 3 numbers")
        return tuple(_convert("float", p) for p in parts)
    if kind == "box":
        parts = raw.split()
        if len(parts) != 6:
            raise ValueError("expected 6 numbers (min xyz, max xyz)")
        return tuple(_convert("float", p) for p in parts)
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError("expected true/false")
    if kind == "fill":
        if raw not in ("solid", "empty"):
            raise ValueError("expected 'solid' or 'empty'")
        return raw
    if kind == "planner":
        if raw not in _PLANNER_ALIASES:
            raise ValueError("expected proposed, greedy or greedy_baseline")
        return _PLANNER_ALIASES[raw]
    raise AssertionError(kind)


def parse_sections(text: str, source: str = "<string>") -> dict[str, list[tuple[str, str, int]]]:
    """Split text into sections of ``(key, value, line_number)`` entries.

    Syntax errors raise immediately with their line number.
    """
    sections: dict[str, list[tuple[str, str, int]]] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]") or len(body) < 3:
                raise ScenarioError(f"{source}:{lineno}: malformed section header {body!r}")
            current = body[1:-1].strip().lower()
            if current in sections:
                raise ScenarioError(f"{source}:{lineno}: duplicate section [{current}]")
            sections[current] = []
            continue
        if "=" not in body:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value', got {body!r}")
        if current is None:
            raise ScenarioError(f"{source}:{lineno}: entry outside of any section")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ScenarioError(f"{source}:{lineno}: empty key")
        sections[current].append((key.lower(), value, lineno))
    return sections


def parse_scenario(text: str, source: str = "<string>", name: str | None = None) -> ScenarioConfig:
    """Parse and fully validate scenario text; problems are reported together."""
    sections = parse_sections(text, source)
    problems: list[str] = []
    values: dict[tuple[str, str], object] = {}
    boxes: dict[str, list[tuple[float, ...]]] = {"solid": [], "carve": []}
    for sec, entries in sections.items():
        if sec not in FIELDS:
            problems.append(f"{source}: unknown section [{sec}]")
            continue
        seen: set[str] = set()
        for key, raw, lineno in entries:
            if sec == "environment" and key in _BOX_KEYS:
                try:
                    boxes[key].append(_convert("box", raw))
                except ValueError as exc:
                    problems.append(f"{source}:{lineno}: environment.{key}: {exc}")
                continue
            if key not in FIELDS[sec]:
                problems.append(f"{source}:{lineno}: unknown key {sec}.{key}")
                continue
            if key in seen:
                problems.append(f"{source}:{lineno}: duplicate key {sec}.{key}")
                continue
            seen.add(key)
            try:
                values[(sec, key)] = _convert(FIELDS[sec][key][0], raw)
            except ValueError as exc:
                problems.append(f"{source}:{lineno}: {sec}.{key}: {exc}")
    for sec, keys in FIELDS.items():
        for key, (_, default) in keys.items():
            if (sec, key) in values:
                continue
            if default is None and (sec, key) not in _DERIVED:
                problems.append(f"{source}: missing required field {sec}.{key}")
            else:
                values[(sec, key)] = default
    if problems:
        raise ScenarioError(f"{source}: scenario is invalid", problems)

    get = lambda sec, key: values[(sec, key)]  # noqa: E731

    def checked(label, factory):
        try:
            return factory()
        except ParameterError as exc:
            problems.append(f"{source}: {label}: {exc}")
            return None

    for sec, key in (("robot", "v_max"), ("robot", "dt"), ("robot", "d_key"), ("run", "step_budget"), ("environment", "voxel_size")):
        if not get(sec, key) > 0:
            problems.append(f"{source}: {sec}.{key} must be positive")
    if get("sensor", "noise_sigma") < 0:
        problems.append(f"{source}: sensor.noise_sigma must be >= 0")
    if get("run", "seed") < 0:
        problems.append(f"{source}: run.seed must be >= 0")
    sensor = checked("sensor", lambda: SensorModel(*(get("sensor", k) for k in ("hfov", "vfov", "channels", "azimuth_steps", "max_range"))))
    ser = checked(
        "ser",
        lambda: SerConfig(get("ser", "zeta_coverage"), get("ser", "v_down"), get("ser", "cluster_tol"), get("ser", "min_cluster_size")),
    )
    graph = checked("graph", lambda: GraphConfig(get("graph", "k"), get("graph", "r_safe")))
    reach = get("planner", "reach_radius")
    if reach is None and ser is not None:
        reach = ser.zeta_coverage / 2.0
    planner = checked(
        "planner",
        lambda: PlannerConfig(get("planner", "w_vol"), get("planner", "w_dir"), get("planner", "w_dis"), reach, get("planner", "eps_dist")),
    )
    start = checked("start", lambda: Pose(Point3.of(get("start", "position")), get("start", "yaw")))
    env_spec = EnvironmentSpec(
        get("environment", "voxel_size"),
        get("environment", "bounds_min"),
        get("environment", "bounds_max"),
        get("environment", "fill"),
        tuple(boxes["solid"]),
        tuple(boxes["carve"]),
    )
    if any(hi <= lo for lo, hi in zip(env_spec.bounds_min, env_spec.bounds_max)):
        problems.append(f"{source}: environment.bounds_max must exceed bounds_min on every axis")
    elif start is not None and env_spec.voxel_size > 0:
        try:
            env = env_spec.build()
            if env.is_blocked(start.position):
                problems.append(f"{source}: start.position {tuple(start.position)} is not in free space")
        except ParameterError as exc:
            problems.append(f"{source}: environment: {exc}")
    if problems:
        raise ScenarioError(f"{source}: scenario is invalid", problems)
    return ScenarioConfig(
        name=name or FsPath(source).stem,
        environment=env_spec,
        start=start,
        sensor=sensor,
        noise_sigma=get("sensor", "noise_sigma"),
        v_max=get("robot", "v_max"),
        dt=get("robot", "dt"),
        d_key=get("robot", "d_key"),
        ser=ser,
        graph=graph,
        planner=planner,
        contribution_on_raw_points=get("planner", "contribution_on_raw_points"),
        step_budget=get("run", "step_budget"),
        seed=get("run", "seed"),
        planner_kind=get("run", "planner"),
        path=source,
    )


def load_scenario(path) -> tuple[ScenarioConfig, Environment]:
    """Read, validate and rasterise a scenario file.

    The environment comes back with its reachable free space flood-filled
    from the start pose.
    """
    p = FsPath(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {p}: {exc}") from exc
    cfg = parse_scenario(text, str(p))
    return cfg, build_environment(cfg)


def build_environment(cfg: ScenarioConfig) -> Environment:
    try:
        return cfg.environment.build(start=cfg.start.position)
    except StateError as exc:
        raise ScenarioError(f"{cfg.path}: {exc}") from exc


SHIPPED_SCENARIOS = ("room", "corridor", "tmaze", "hmaze", "ring_spur")


def shipped_scenario_path(name: str) -> FsPath:
    """Filesystem path of a scenario bundled with the package."""
    ref = resources.files("topoexplore") / "scenarios" / f"{name}.scn"
    return FsPath(str(ref))


def resolve_scenario_path(arg: str) -> FsPath:
    p = FsPath(arg)
    if p.exists():
        return p
    if arg in SHIPPED_SCENARIOS:
        return shipped_scenario_path(arg)
    return p
