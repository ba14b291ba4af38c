import time

import numpy as np
import pytest

from topoexplore.core import MapStore
from topoexplore.harness import run_episode
from topoexplore.scenario import SHIPPED_SCENARIOS, load_scenario, shipped_scenario_path


def store_from(scans, positions=None):
    """MapStore from a list of point arrays; keyframes default to the origin."""
    store = MapStore()
    for i, pts in enumerate(scans):
        pos = (0.0, 0.0, 0.0) if positions is None else positions[i]
        store.append(pos, i, np.asarray(pts, dtype=float).reshape(-1, 3))
    return store


class PartitionAudit:
    """Episode observer that re-derives the coverage partition at every keyframe."""

    def __init__(self):
        self.events = 0
        self.boundary_probes = 0
        self.failures = []
        self.seconds = 0.0

    def __call__(self, ep):
        t0 = time.perf_counter()
        sers = ep.sers
        zeta = ep.cfg.ser.zeta_coverage
        part = sers.partition
        down = sers.downsampled.points
        kfs = ep.store.positions
        mask = part.covered_mask
        n = len(down)
        # exhaustive and disjoint over the downsampled map
        if len(part.covered) + len(part.uncovered) != n or mask.shape != (n,):
            self.failures.append((ep.state.step, "sizes"))
        cov_set = {tuple(p) for p in part.covered.points}
        unc_set = {tuple(p) for p in part.uncovered.points}
        if cov_set & unc_set or (cov_set | unc_set) != {tuple(p) for p in down}:
            self.failures.append((ep.state.step, "disjoint/exhaustive"))
        # independent distance oracle, one keyframe at a time
        best = np.full(n, np.inf)
        for k in kfs:
            best = np.minimum(best, np.sqrt(((down - k) ** 2).sum(axis=1)))
        if not np.array_equal(best <= zeta, mask):
            self.failures.append((ep.state.step, "coverage rule"))
        # a point exactly zeta from the newest keyframe must be covered
        from topoexplore.core import TaggedPoints
        from topoexplore.ser import partition_coverage

        probe = kfs[-1] + np.array([zeta, 0.0, 0.0])
        if float(np.sqrt(((probe - kfs[-1]) ** 2).sum())) == zeta:
            self.boundary_probes += 1
            got = partition_coverage(TaggedPoints(probe[None], np.array([0])), kfs, zeta)
            if len(got.covered) != 1:
                self.failures.append((ep.state.step, "boundary"))
        self.events += 1
        self.seconds += time.perf_counter() - t0


class EpisodeCache:
    def __init__(self):
        self._runs = {}

    def get(self, name, planner="proposed"):
        key = (name, planner)
        if key not in self._runs:
            cfg, env = load_scenario(shipped_scenario_path(name))
            audit = PartitionAudit()
            result = run_episode(cfg.with_planner(planner), env, observer=audit)
            self._runs[key] = (result, audit)
        return self._runs[key]


@pytest.fixture(scope="session")
def episodes():
    return EpisodeCache()


@pytest.fixture(scope="session")
def shipped():
    return SHIPPED_SCENARIOS


ACCEPTANCE_LINES: list[str] = []


def report_criterion(number, ok, detail):
    status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
    line = f"criterion {number:>2}: {status:<11} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
