"""Per-trial detector threshold optimization and zero-velocity label generation.

The threshold of each candidate detector is tuned by a logarithmic grid
search (with one refinement pass) minimizing position ARMSE of the filtered
trajectory against ground truth; the best detector's flags at its optimal
threshold become the trial's zero-velocity labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImuSequence, TimedPositions
from .detectors import AredParams, ShoeParams, detect_sequence, speed_statistics
from .errors import FilterDivergenceError, ZvnavError
from .eskf import FilterConfig, run_filter
from .metrics import armse

# fixed tie-break priority between detectors with equal ARMSE
_DETECTOR_PRIORITY = {"shoe": 0, "speed": 1, "ared": 2}

DEFAULT_GRID_POINTS = 50
DEFAULT_REFINE_POINTS = 10
MIN_GRID_DECADES = 4.0


@dataclass(frozen=True)
class TrialRecord:
    """One motion trial: IMU log plus whatever ground truth is available."""

    imu: ImuSequence
    gt_positions: TimedPositions | None = None
    gt_zv: np.ndarray | None = None
    motion_label: str | None = None

    def __post_init__(self):
        if self.gt_zv is not None:
            zv = np.ascontiguousarray(self.gt_zv, dtype=np.uint8)
            object.__setattr__(self, "gt_zv", zv)
            if zv.shape[0] != len(self.imu):
                raise ZvnavError(
                    f"gt_zv length {zv.shape[0]} does not match IMU length {len(self.imu)}"
                )

    def require_positions(self) -> TimedPositions:
        if self.gt_positions is None:
            raise ZvnavError("trial has no ground-truth positions")
        return self.gt_positions


@dataclass(frozen=True)
class LabelResult:
    """Outcome of best-detector labelling for one trial."""

    winning_detector: str
    threshold: float
    armse: float
    labels: np.ndarray
    per_detector: dict


def _align_to_imu(source_t: np.ndarray, values: np.ndarray, imu_t: np.ndarray) -> np.ndarray:
    """Map per-position flags onto IMU timestamps by nearest neighbour."""
    if source_t.shape[0] == imu_t.shape[0] and np.allclose(source_t, imu_t, atol=1e-9):
        return values
    idx = np.searchsorted(source_t, imu_t)
    idx = np.clip(idx, 1, source_t.shape[0] - 1)
    left_closer = (imu_t - source_t[idx - 1]) < (source_t[idx] - imu_t)
    idx = idx - left_closer.astype(int)
    return values[idx]


def _statistic_trace(trial: TrialRecord, kind: str, params) -> np.ndarray:
    """Detector statistic per IMU step (threshold-independent)."""
    if kind in ("shoe", "ared"):
        trace = detect_sequence(trial.imu, kind, params)
        return trace.statistic
    if kind == "speed":
        track = trial.require_positions()
        stats = speed_statistics(track)
        return _align_to_imu(track.t, stats, trial.imu.t)
    raise ZvnavError(f"unknown detector kind {kind!r}")


def flags_for_threshold(trial: TrialRecord, kind: str, params, gamma: float) -> np.ndarray:
    """Stationary flags of a detector at a specific threshold."""
    stat = _statistic_trace(trial, kind, params)
    return (stat < gamma).astype(np.uint8)


def default_params(kind: str):
    if kind == "shoe":
        return ShoeParams()
    if kind == "ared":
        return AredParams()
    if kind == "speed":
        return None
    raise ZvnavError(f"unknown detector kind {kind!r}")


def _default_grid(stat: np.ndarray) -> np.ndarray:
    """Log-spaced candidate thresholds spanning the statistic's range.

    The grid always dips below the smallest positive statistic (so the
    flag class of negligible thresholds stays reachable, e.g. noiseless
    stance phases with exactly-zero statistics), spans at least
    MIN_GRID_DECADES decades, and is capped at 8 decades overall.
    """
    positive = stat[stat > 0]
    if positive.size == 0:
        raise ZvnavError("statistic trace is identically zero; nothing to threshold")
    hi = float(np.percentile(positive, 99.9))
    lo = min(0.9 * float(positive.min()), hi / 10**MIN_GRID_DECADES)
    lo = max(lo, hi * 1e-8)
    return np.geomspace(lo, hi, DEFAULT_GRID_POINTS)


def _evaluate_gamma(
    trial: TrialRecord,
    stat: np.ndarray,
    gamma: float,
    cfg: FilterConfig,
    cache: dict,
) -> float:
    """ARMSE of the filtered trajectory using flags = (stat < gamma).

    Flag-identical thresholds share one filter run via the cache. Divergent
    runs score +inf.
    """
    flags = (stat < gamma).astype(np.uint8)
    key = flags.tobytes()
    if key in cache:
        return cache[key]
    try:
        traj = run_filter(trial.imu, flags, cfg)
        value = armse(traj, trial.require_positions())
        if not np.isfinite(value):
            value = np.inf
    except FilterDivergenceError:
        value = np.inf
    cache[key] = value
    return value


def optimize_threshold(
    trial: TrialRecord,
    kind: str,
    grid=None,
    cfg: FilterConfig | None = None,
    params=None,
) -> tuple[float, float]:
    """Find the detector threshold minimizing position ARMSE for one trial.

    With an explicit ``grid`` (sorted ascending, >= 3 points) the argmin over
    that grid is returned, ties broken toward the smaller threshold. With
    ``grid=None`` a log-spaced default grid is built from the statistic trace
    and a single refinement pass is run around the coarse argmin.

    Returns (threshold, armse). Raises if every candidate diverges.
    """
    if cfg is None:
        cfg = FilterConfig()
    if params is None:
        params = default_params(kind)
    trial.require_positions()
    stat = _statistic_trace(trial, kind, params)

    refine = grid is None
    if grid is None:
        grid = _default_grid(stat)
    else:
        grid = np.asarray(grid, dtype=float)
        if grid.size < 3:
            raise ZvnavError(f"explicit grid needs at least 3 points, got {grid.size}")
        if np.any(np.diff(grid) < 0):
            raise ZvnavError("grid must be sorted ascending")
        if np.any(grid <= 0):
            raise ZvnavError("thresholds must be positive")
        grid = np.unique(grid)

    cache: dict = {}
    scores = np.array([_evaluate_gamma(trial, stat, g, cfg, cache) for g in grid])
    best = int(np.argmin(scores))  # first occurrence = smallest gamma among ties

    if refine and np.isfinite(scores[best]):
        lo = grid[max(best - 1, 0)]
        hi = grid[min(best + 1, grid.size - 1)]
        if hi > lo:
            fine = np.geomspace(lo, hi, DEFAULT_REFINE_POINTS)
            fine_scores = np.array([_evaluate_gamma(trial, stat, g, cfg, cache) for g in fine])
            gammas = np.concatenate([grid, fine])
            scores = np.concatenate([scores, fine_scores])
            order = np.argsort(gammas, kind="stable")
            gammas, scores = gammas[order], scores[order]
            best = int(np.argmin(scores))
            grid = gammas

    if not np.isfinite(scores[best]):
        raise ZvnavError(
            "all candidate thresholds diverged: " + ", ".join(f"{g:.4g}" for g in grid)
        )
    return float(grid[best]), float(scores[best])


def label_trial(
    trial: TrialRecord,
    detectors=("shoe", "ared", "speed"),
    grids: dict | None = None,
    cfg: FilterConfig | None = None,
    params: dict | None = None,
) -> LabelResult:
    """Produce zero-velocity labels from the best detector for a trial.

    Every requested detector is optimized independently; the winner is the
    one with the lowest ARMSE (ties broken by the fixed priority shoe,
    speed, ared). The labels are exactly the winner's flags at its optimal
    threshold, with no post-processing.
    """
    if cfg is None:
        cfg = FilterConfig()
    if not detectors:
        raise ZvnavError("at least one detector required")
    for kind in detectors:
        if kind not in _DETECTOR_PRIORITY:
            raise ZvnavError(f"unknown detector kind {kind!r}")
    if "speed" in detectors:
        trial.require_positions()

    per_detector = {}
    for kind in detectors:
        p = (params or {}).get(kind, default_params(kind))
        grid = (grids or {}).get(kind)
        gamma, err = optimize_threshold(trial, kind, grid=grid, cfg=cfg, params=p)
        per_detector[kind] = {"threshold": gamma, "armse": err}

    winner = min(
        per_detector,
        key=lambda k: (per_detector[k]["armse"], _DETECTOR_PRIORITY[k]),
    )
    win = per_detector[winner]
    labels = flags_for_threshold(
        trial, winner, (params or {}).get(winner, default_params(winner)), win["threshold"]
    )
    return LabelResult(
        winning_detector=winner,
        threshold=win["threshold"],
        armse=win["armse"],
        labels=labels,
        per_detector=per_detector,
    )
