"""Trajectory evaluation metrics.

All metrics compare in a shared navigation frame with a known start pose;
no alignment fitting is performed.
"""

from __future__ import annotations

import numpy as np

from .core import TimedPositions
from .eskf import Trajectory
from .errors import ZvnavError


def interpolate_positions(traj: Trajectory, times) -> np.ndarray:
    """Linearly interpolate the estimated position at the given times."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ZvnavError("no evaluation timestamps given")
    if times.min() < traj.t[0] - 1e-12 or times.max() > traj.t[-1] + 1e-12:
        raise ZvnavError(
            f"evaluation times [{times.min():.3f}, {times.max():.3f}] fall outside the "
            f"trajectory span [{traj.t[0]:.3f}, {traj.t[-1]:.3f}]"
        )
    out = np.empty((times.size, 3))
    for axis in range(3):
        out[:, axis] = np.interp(times, traj.t, traj.pos[:, axis])
    return out


def armse(traj: Trajectory, gt: TimedPositions) -> float:
    """Root-mean-square 3-D position error over the ground-truth points."""
    if len(gt) == 0:
        raise ZvnavError("ground truth is empty")
    est = interpolate_positions(traj, gt.t)
    err = est - gt.xyz
    return float(np.sqrt(np.mean((err * err).sum(axis=1))))


def loop_closure(traj: Trajectory) -> tuple[float, float]:
    """(3-D, vertical) distance between the first and last estimated positions.

    Meaningful when the true trajectory starts and ends at the same point.
    """
    if len(traj) == 0:
        raise ZvnavError("trajectory is empty")
    delta = traj.pos[-1] - traj.pos[0]
    return float(np.linalg.norm(delta)), float(abs(delta[2]))


def furthest_point_vertical(traj: Trajectory, known_height: float, t_furthest: float) -> float:
    """Absolute height-estimate error at the trajectory's furthest point."""
    z = interpolate_positions(traj, np.array([t_furthest]))[0, 2]
    return float(abs(z - known_height))
