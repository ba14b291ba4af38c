"""Frontier-to-keyframe edges chosen by keyframe contribution."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .core import MapStore, Point3, voxel_keys
from .errors import ConsistencyError, ParameterError
from .ser import SER, SerSet


@dataclass(frozen=True)
class FrontierEntry:
    ser_id: int
    frontier: Point3
    anchor_keyframe_id: int


@dataclass(frozen=True)
class FrontierGraph:
    entries: tuple[FrontierEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def find_anchor(self, ser_id: int) -> int:
        for e in self.entries:
            if e.ser_id == ser_id:
                return e.anchor_keyframe_id
        raise ConsistencyError(f"frontier graph has no entry for SER {ser_id}")


def contribution_histogram(ser: SER) -> Counter:
    """Count of SER points per originating keyframe id."""
    ids, counts = np.unique(ser.points.keyframe_ids, return_counts=True)
    return Counter({int(i): int(c) for i, c in zip(ids, counts)})


def highest_contribution(hist: Counter) -> int:
    """Keyframe with the most points; ties go to the most recent (largest id)."""
    if not hist:
        raise ParameterError("empty contribution histogram")
    return max(hist.items(), key=lambda kv: (kv[1], kv[0]))[0]


def raw_contribution_histogram(ser: SER, store: MapStore, v_down: float) -> Counter:
    """Histogram over every raw stored point that falls into the SER's voxels."""
    raw = store.tagged_points()
    mask = np.isin(voxel_keys(raw.points, v_down), ser.keys)
    ids, counts = np.unique(raw.keyframe_ids[mask], return_counts=True)
    return Counter({int(i): int(c) for i, c in zip(ids, counts)})


def build_frontier_graph(
    sers: SerSet,
    store: MapStore | None = None,
    v_down: float | None = None,
    contribution_on_raw_points: bool = False,
) -> FrontierGraph:
    """One entry per SER, linking its frontier to its highest-contribution keyframe.

    No collision checks are made on these edges.
    """
    entries = []
    for ser in sers:
        if contribution_on_raw_points:
            if store is None or v_down is None:
                raise ParameterError("raw-point contribution needs the map store and v_down")
            hist = raw_contribution_histogram(ser, store, v_down)
        else:
            hist = contribution_histogram(ser)
        entries.append(FrontierEntry(ser.id, ser.frontier, highest_contribution(hist)))
    return FrontierGraph(tuple(entries))
