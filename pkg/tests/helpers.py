import numpy as np

from topoexplore.core import Point3, Pose, TaggedPoints, centroid, voxel_keys
from topoexplore.ser import SER, CoveragePartition, SerSet
from topoexplore.sensor_sim import RobotState


def make_ser(sid, points, ids, frontier=None):
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    tp = TaggedPoints(pts, np.asarray(ids, dtype=np.int64))
    f = centroid(pts) if frontier is None else Point3.of(frontier)
    return SER(sid, tp, f, voxel_keys(pts, 1.0))


def ser_with_volume(sid, frontier, volume, kf_id=0):
    """A SER of ``volume`` points whose frontier is pinned at ``frontier``."""
    f = np.asarray(frontier, dtype=float)
    pts = f + np.zeros((volume, 3))
    return make_ser(sid, pts, [kf_id] * volume, frontier=f)


def ser_set(sers):
    empty = TaggedPoints.empty()
    return SerSet(list(sers), 0, empty, CoveragePartition(empty, empty, np.zeros(0, dtype=bool)))


def robot(x=0.0, y=0.0, z=0.0, yaw=0.0):
    return RobotState(Pose(Point3(x, y, z), yaw))
