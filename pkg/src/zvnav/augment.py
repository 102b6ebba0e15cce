"""Training-data augmentation and IMU retargeting.

Retargeting emulates a lower-grade sensor from high-quality recordings:
causal first-order low-pass filtering, linear-interpolation resampling onto
a uniform lower-rate grid, then seeded Gaussian noise injection per channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, lfilter_zi

from .core import ImuSequence
from .errors import ZvnavError


@dataclass(frozen=True)
class RetargetSpec:
    """Parameters for emulating a lower-rate, noisier IMU.

    Default noise levels (1e-2 m/s^2, 1.74e-3 rad/s) describe a typical
    low-cost MEMS unit relative to a tactical-grade source.
    """

    source_rate: float = 200.0
    target_rate: float = 125.0
    cutoff: float = 40.0
    sigma_accel: float = 1e-2
    sigma_gyro: float = 1.74e-3
    seed: int = 0

    def __post_init__(self):
        if self.target_rate >= self.source_rate:
            raise ZvnavError(
                f"target rate {self.target_rate} must be below source rate {self.source_rate}"
            )
        if not (0.0 < self.cutoff < self.target_rate / 2.0):
            raise ZvnavError(
                f"cutoff {self.cutoff} Hz must lie in (0, target_rate/2 = {self.target_rate / 2})"
            )
        if self.sigma_accel < 0 or self.sigma_gyro < 0:
            raise ZvnavError("noise levels must be non-negative")


def rotate_sample(x: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Rotate every accel and gyro 3-vector of a (T, 6) window by R."""
    x = np.asarray(x, dtype=float)
    R = np.asarray(R, dtype=float)
    if x.ndim != 2 or x.shape[1] != 6:
        raise ZvnavError(f"window must be (T, 6), got {x.shape}")
    if R.shape != (3, 3):
        raise ZvnavError(f"rotation must be 3x3, got {R.shape}")
    out = np.empty_like(x)
    out[:, 0:3] = x[:, 0:3] @ R.T
    out[:, 3:6] = x[:, 3:6] @ R.T
    return out


def scale_sample(x: np.ndarray, s: float) -> np.ndarray:
    """Scale all channels of a window by a positive factor."""
    if s <= 0:
        raise ZvnavError(f"scale must be positive, got {s}")
    return np.asarray(x, dtype=float) * s


def _check_uniform(seq: ImuSequence, jitter_tol: float = 0.01) -> float:
    dt_nominal = 1.0 / seq.nominal_rate
    dts = np.diff(seq.t)
    jitter = np.max(np.abs(dts - dt_nominal)) / dt_nominal
    if jitter > jitter_tol:
        raise ZvnavError(
            f"sampling jitter {jitter * 100:.2f}% exceeds {jitter_tol * 100:.0f}%; "
            "the causal filter assumes a uniform rate"
        )
    return dt_nominal


def lowpass_first_order(seq: ImuSequence, cutoff: float) -> ImuSequence:
    """Causal single-pole low-pass, bilinear-transform discretization.

    Unity DC gain and exactly -3 dB at the cutoff frequency by construction.
    Requires near-uniform sampling (jitter within 1%).
    """
    fs = seq.nominal_rate
    if not (0.0 < cutoff < fs / 2.0):
        raise ZvnavError(f"cutoff {cutoff} Hz must lie below Nyquist ({fs / 2} Hz)")
    _check_uniform(seq)
    K = np.tan(np.pi * cutoff / fs)
    b = np.array([K, K]) / (1.0 + K)
    a = np.array([1.0, (K - 1.0) / (1.0 + K)])
    zi = lfilter_zi(b, a)
    channels = np.column_stack([seq.accel, seq.gyro])
    out = np.empty_like(channels)
    for ch in range(channels.shape[1]):
        out[:, ch], _ = lfilter(b, a, channels[:, ch], zi=zi * channels[0, ch])
    return ImuSequence(seq.t.copy(), out[:, 0:3], out[:, 3:6], seq.nominal_rate)


def retarget(seq: ImuSequence, spec: RetargetSpec) -> ImuSequence:
    """Low-pass, resample to a uniform lower-rate grid, and add sensor noise.

    Output timestamps are exactly uniform at 1/target_rate starting from the
    first input timestamp. Noise is added after downsampling (it models the
    target sensor's own noise at its own rate) and is deterministic for a
    fixed seed.
    """
    if abs(seq.nominal_rate - spec.source_rate) / spec.source_rate > 0.01:
        raise ZvnavError(
            f"sequence rate {seq.nominal_rate:.1f} Hz does not match spec source rate "
            f"{spec.source_rate:.1f} Hz"
        )
    filtered = lowpass_first_order(seq, spec.cutoff)
    duration = filtered.t[-1] - filtered.t[0]
    n_out = int(np.floor(duration * spec.target_rate)) + 1
    t_out = filtered.t[0] + np.arange(n_out) / spec.target_rate

    channels = np.column_stack([filtered.accel, filtered.gyro])
    resampled = np.empty((n_out, 6))
    for ch in range(6):
        resampled[:, ch] = np.interp(t_out, filtered.t, channels[:, ch])

    rng = np.random.default_rng(spec.seed)
    if spec.sigma_accel > 0:
        resampled[:, 0:3] += rng.normal(0.0, spec.sigma_accel, size=(n_out, 3))
    if spec.sigma_gyro > 0:
        resampled[:, 3:6] += rng.normal(0.0, spec.sigma_gyro, size=(n_out, 3))

    return ImuSequence(t_out, resampled[:, 0:3], resampled[:, 3:6], spec.target_rate)
