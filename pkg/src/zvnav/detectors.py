"""Classical fixed-threshold zero-velocity detectors.

Two windowed IMU statistics (the gravity-deviation + gyro-energy stance test
and the angular-rate energy test) plus a position-differencing speed test.
A step is declared stationary when its statistic falls below the threshold.
Windows are forward-anchored: the decision at step k is computed from samples
k .. k+N-1, and the trailing N-1 steps copy the last computable decision.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .core import ImuSequence, TimedPositions
from .errors import ZvnavError

DETECTOR_KINDS = ("shoe", "ared", "speed")


@dataclass(frozen=True)
class DetectorDecision:
    """Per-step detector output: the raw test statistic and the binary flag."""

    statistic: float
    stationary: bool


@dataclass(frozen=True)
class ShoeParams:
    """Stance-test configuration.

    The measurement variances fix the scale of the statistic, so thresholds
    are meaningful only relative to one (sigma_a2, sigma_w2, window) choice.
    """

    window: int = 5
    sigma_a2: float = 1e-4
    sigma_w2: float = 1e-6
    threshold: float = 1.0
    gravity: float = 9.8065

    def __post_init__(self):
        if self.window < 1:
            raise ZvnavError(f"window must be >= 1, got {self.window}")
        if self.sigma_a2 <= 0 or self.sigma_w2 <= 0:
            raise ZvnavError("variances must be positive")
        if self.threshold <= 0:
            raise ZvnavError(f"threshold must be positive, got {self.threshold}")


@dataclass(frozen=True)
class AredParams:
    window: int = 5
    threshold: float = 1.0

    def __post_init__(self):
        if self.window < 1:
            raise ZvnavError(f"window must be >= 1, got {self.window}")
        if self.threshold <= 0:
            raise ZvnavError(f"threshold must be positive, got {self.threshold}")


@dataclass(frozen=True)
class DetectorTrace:
    """Per-step statistics and flags for a whole sequence."""

    statistic: np.ndarray
    stationary: np.ndarray

    def __len__(self) -> int:
        return int(self.statistic.shape[0])

    def __getitem__(self, k: int) -> DetectorDecision:
        return DetectorDecision(float(self.statistic[k]), bool(self.stationary[k]))


def shoe_statistic(accel, gyro, params: ShoeParams) -> float:
    """Stance statistic over one window of samples.

    Averages the variance-weighted squared deviation of each acceleration
    sample from gravity along the window-mean direction, plus the weighted
    squared gyro norms. Raises if the mean acceleration is near zero (gravity
    direction undefined).
    """
    accel = np.atleast_2d(np.asarray(accel, dtype=float))
    gyro = np.atleast_2d(np.asarray(gyro, dtype=float))
    if accel.shape != gyro.shape or accel.shape[1] != 3:
        raise ZvnavError(f"window shapes mismatch: {accel.shape} vs {gyro.shape}")
    n = accel.shape[0]
    if n != params.window:
        raise ZvnavError(f"window has {n} samples, params expect {params.window}")
    abar = accel.mean(axis=0)
    norm = float(np.linalg.norm(abar))
    if norm < 1e-9:
        raise ZvnavError("mean acceleration near zero; gravity direction undefined")
    resid = accel - params.gravity * (abar / norm)
    acc_term = float((resid * resid).sum()) / params.sigma_a2
    gyro_term = float((gyro * gyro).sum()) / params.sigma_w2
    return (acc_term + gyro_term) / n


def ared_statistic(gyro, window: int | None = None) -> float:
    """Mean squared angular-rate norm over one window."""
    gyro = np.atleast_2d(np.asarray(gyro, dtype=float))
    n = gyro.shape[0]
    if n < 1:
        raise ZvnavError("window must contain at least one sample")
    if window is not None and n != window:
        raise ZvnavError(f"window has {n} samples, expected {window}")
    return float((gyro * gyro).sum()) / n


def speed_detect(track: TimedPositions, threshold: float) -> np.ndarray:
    """Stationary flags from position differencing.

    Step k is stationary when the finite-difference speed from sample k-1 to
    k is below ``threshold``; the first sample copies the second's flag.
    """
    if len(track) < 2:
        raise ZvnavError("speed detection needs at least 2 position samples")
    dt = np.diff(track.t)
    if np.any(dt <= 0):
        k = int(np.argmax(dt <= 0))
        raise ZvnavError(f"duplicate or non-increasing timestamp at index {k + 1}")
    dp = np.diff(track.xyz, axis=0)
    speed = np.sqrt((dp * dp).sum(axis=1)) / dt
    flags = np.empty(len(track), dtype=np.uint8)
    flags[1:] = speed < threshold
    flags[0] = flags[1]
    return flags


def speed_statistics(track: TimedPositions) -> np.ndarray:
    """Finite-difference speeds aligned like :func:`speed_detect` flags."""
    dt = np.diff(track.t)
    if np.any(dt <= 0):
        k = int(np.argmax(dt <= 0))
        raise ZvnavError(f"duplicate or non-increasing timestamp at index {k + 1}")
    dp = np.diff(track.xyz, axis=0)
    speed = np.sqrt((dp * dp).sum(axis=1)) / dt
    out = np.empty(len(track))
    out[1:] = speed
    out[0] = speed[0]
    return out


def _extend_trailing(stat: np.ndarray, total: int) -> np.ndarray:
    """Pad a forward-anchored statistic so every step carries a decision."""
    out = np.empty(total)
    out[: stat.shape[0]] = stat
    out[stat.shape[0] :] = stat[-1]
    return out


def detect_sequence(seq: ImuSequence, kind: str, params) -> DetectorTrace:
    """Apply a windowed detector over a whole sequence.

    ``kind`` is ``"shoe"`` or ``"ared"``; ``params`` the matching dataclass.
    The trailing window-1 steps copy the last computable decision, so the
    trace has exactly one entry per sample.
    """
    n = len(seq)
    if kind == "shoe":
        if not isinstance(params, ShoeParams):
            raise ZvnavError("shoe detection requires ShoeParams")
        if n < params.window:
            raise ZvnavError(f"sequence of {n} samples shorter than window {params.window}")
        try:
            stat = _kernels.shoe_statistics(
                seq.accel,
                seq.gyro,
                params.window,
                params.sigma_a2,
                params.sigma_w2,
                params.gravity,
            )
        except ValueError as exc:
            raise ZvnavError(str(exc)) from exc
        threshold = params.threshold
    elif kind == "ared":
        if not isinstance(params, AredParams):
            raise ZvnavError("ared detection requires AredParams")
        if n < params.window:
            raise ZvnavError(f"sequence of {n} samples shorter than window {params.window}")
        try:
            stat = _kernels.ared_statistics(seq.gyro, params.window)
        except ValueError as exc:
            raise ZvnavError(str(exc)) from exc
        threshold = params.threshold
    else:
        raise ZvnavError(f"unknown detector kind {kind!r}; expected 'shoe' or 'ared'")

    stat = _extend_trailing(stat, n)
    return DetectorTrace(stat, (stat < threshold).astype(np.uint8))


def with_threshold(params, threshold: float):
    """Copy detector params with a different threshold."""
    return replace(params, threshold=threshold)
