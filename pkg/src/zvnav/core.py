"""Domain types and quaternion algebra shared by all other modules.

Conventions (fixed throughout the toolkit):
    - Quaternions are scalar-first (w, x, y, z) unit quaternions encoding the
      sensor-to-navigation rotation: ``v_nav = R(q) @ v_sensor``.
    - The navigation frame is z-up; gravity is (0, 0, -g).
    - All units are SI: seconds, meters, m/s^2, rad/s.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import KinematicsError, ZvnavError

STANDARD_GRAVITY = 9.8065  # m/s^2, configurable everywhere it is used


# ---------------------------------------------------------------------------
# Quaternion algebra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, scalar-first (w, x, y, z), sensor-to-navigation."""

    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, q) -> "Quaternion":
        w, x, y, z = np.asarray(q, dtype=float)
        return cls(float(w), float(x), float(y), float(z))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return float(np.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2))

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0:
            raise ZvnavError("cannot normalize a zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)


def quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product a (x) b."""
    w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z
    x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y
    y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x
    z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w
    return Quaternion(w, x, y, z)


def quat_from_axis_angle(axis_angle) -> Quaternion:
    """Quaternion for a rotation vector (axis * angle, radians)."""
    rv = np.asarray(axis_angle, dtype=float)
    angle = float(np.linalg.norm(rv))
    if angle < 1e-300:
        return Quaternion.identity()
    half = 0.5 * angle
    s = np.sin(half) / angle
    return Quaternion(float(np.cos(half)), float(rv[0] * s), float(rv[1] * s), float(rv[2] * s))


def quat_to_rotmat(q: Quaternion) -> np.ndarray:
    """Convert a unit quaternion to the corresponding 3x3 rotation matrix.

    Parameters
    ----------
    q : Quaternion
        Sensor-to-navigation rotation. Expected unit-norm; deviations larger
        than 1e-6 are normalized away with a warning.

    Returns
    -------
    numpy.ndarray, shape (3, 3)
        Orthonormal rotation matrix with det(R) = +1.
    """
    n = q.norm()
    if abs(n - 1.0) > 1e-6:
        warnings.warn(
            f"quaternion norm {n:.6g} deviates from 1; normalizing", stacklevel=2
        )
    q = q.normalized()
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (w * y + x * z)],
            [2 * (w * z + x * y), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
        ]
    )


def quat_increment(q: Quaternion, gyro, dt: float) -> Quaternion:
    """Advance an attitude quaternion by one gyroscope sample.

    Uses the exact axis-angle increment for the rotation ``gyro * dt``
    expressed in the sensor frame, composed on the right:
    ``R(q') = R(q) @ expm(skew(gyro * dt))``. Norm-preserving by construction.

    Parameters
    ----------
    q : Quaternion
        Current sensor-to-navigation attitude.
    gyro : array_like, shape (3,)
        Angular velocity in the sensor frame, rad/s.
    dt : float
        Integration interval, s. Must be positive.

    Returns
    -------
    Quaternion
        Updated unit quaternion.

    Raises
    ------
    KinematicsError
        If the single-step rotation magnitude ``|gyro| * dt`` exceeds pi,
        which signals an inadequate data rate.
    """
    if dt <= 0.0:
        raise ZvnavError(f"dt must be positive, got {dt}")
    rv = np.asarray(gyro, dtype=float) * dt
    angle = float(np.linalg.norm(rv))
    if angle > np.pi:
        raise KinematicsError(
            f"single-step rotation {angle:.3f} rad exceeds pi; data rate too low"
        )
    return quat_multiply(q, quat_from_axis_angle(rv)).normalized()


def rotation_about_axis(axis: int, angle: float) -> np.ndarray:
    """Rotation matrix about a coordinate axis (0=x, 1=y, 2=z)."""
    c, s = np.cos(angle), np.sin(angle)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)
    if axis == 2:
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)
    raise ValueError(f"axis must be 0, 1 or 2, got {axis}")


def quat_from_two_vectors(v_from, v_to) -> Quaternion:
    """Minimal rotation mapping unit direction v_from onto v_to."""
    a = np.asarray(v_from, dtype=float)
    b = np.asarray(v_to, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-15:
        return Quaternion.identity()
    if c < -1.0 + 1e-12:
        # 180 degrees: rotate about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-9:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis = axis / np.linalg.norm(axis)
        return quat_from_axis_angle(axis * np.pi)
    axis = np.cross(a, b)
    axis = axis / np.linalg.norm(axis)
    angle = float(np.arccos(np.clip(c, -1.0, 1.0)))
    return quat_from_axis_angle(axis * angle)


# ---------------------------------------------------------------------------
# IMU data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImuSample:
    """One timestamped 6-axis inertial measurement.

    ``accel`` is specific force in the sensor frame (m/s^2); a sensor at rest
    and level reads (0, 0, +g). ``gyro`` is angular velocity in the sensor
    frame (rad/s).
    """

    t: float
    accel: np.ndarray
    gyro: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float))
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float))
        if not (
            np.isfinite(self.t)
            and np.all(np.isfinite(self.accel))
            and np.all(np.isfinite(self.gyro))
        ):
            raise ZvnavError("ImuSample components must all be finite")


@dataclass(frozen=True)
class ImuSequence:
    """Column-wise IMU log: timestamps plus accel/gyro sample matrices.

    Stored as contiguous arrays for efficiency; ``samples()`` materializes
    :class:`ImuSample` values on demand. Timestamps must be strictly
    increasing and inter-sample gaps must stay within 3x the nominal period.
    """

    t: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    nominal_rate: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=float)
        accel = np.ascontiguousarray(self.accel, dtype=float)
        gyro = np.ascontiguousarray(self.gyro, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "accel", accel)
        object.__setattr__(self, "gyro", gyro)
        if t.ndim != 1 or accel.shape != (t.size, 3) or gyro.shape != (t.size, 3):
            raise ZvnavError(
                f"inconsistent shapes: t {t.shape}, accel {accel.shape}, gyro {gyro.shape}"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(accel)) and np.all(np.isfinite(gyro))):
            raise ZvnavError("IMU sequence contains non-finite values")
        if self.nominal_rate <= 0:
            raise ZvnavError(f"nominal_rate must be positive, got {self.nominal_rate}")
        if t.size >= 2:
            gaps = np.diff(t)
            if np.any(gaps <= 0):
                k = int(np.argmax(gaps <= 0))
                raise ZvnavError(
                    f"timestamps not strictly increasing at index {k + 1} "
                    f"(t[{k}]={t[k]:.6f}, t[{k + 1}]={t[k + 1]:.6f})"
                )
            max_gap = 3.0 / self.nominal_rate
            if np.any(gaps > max_gap):
                k = int(np.argmax(gaps > max_gap))
                raise ZvnavError(
                    f"gap of {gaps[k]:.6f} s at index {k + 1} exceeds 3x nominal period "
                    f"({max_gap:.6f} s)"
                )

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self) else 0.0

    def samples(self) -> list[ImuSample]:
        return [
            ImuSample(float(self.t[i]), self.accel[i], self.gyro[i])
            for i in range(len(self))
        ]

    def slice(self, start: int, stop: int) -> "ImuSequence":
        return ImuSequence(
            self.t[start:stop], self.accel[start:stop], self.gyro[start:stop], self.nominal_rate
        )

    @classmethod
    def from_samples(cls, samples, nominal_rate: float) -> "ImuSequence":
        t = np.array([s.t for s in samples], dtype=float)
        accel = np.array([s.accel for s in samples], dtype=float)
        gyro = np.array([s.gyro for s in samples], dtype=float)
        return cls(t, accel, gyro, nominal_rate)


@dataclass(frozen=True)
class NavState:
    """Nominal navigation state: position, velocity, and attitude."""

    p: np.ndarray
    v: np.ndarray
    q: Quaternion

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.p.shape != (3,) or self.v.shape != (3,):
            raise ZvnavError("p and v must be 3-vectors")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v))):
            raise ZvnavError("NavState components must be finite")
        if abs(self.q.norm() - 1.0) > 1e-6:
            raise ZvnavError(f"NavState quaternion norm {self.q.norm():.6g} not unit")

    @classmethod
    def initial(cls, q: Quaternion | None = None) -> "NavState":
        return cls(np.zeros(3), np.zeros(3), q if q is not None else Quaternion.identity())


@dataclass(frozen=True)
class TimedPositions:
    """Timestamped 3-D positions (ground truth tracks, surveyed markers)."""

    t: np.ndarray
    xyz: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=float)
        xyz = np.ascontiguousarray(self.xyz, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "xyz", xyz)
        if t.ndim != 1 or xyz.shape != (t.size, 3):
            raise ZvnavError(f"inconsistent shapes: t {t.shape}, xyz {xyz.shape}")
        if t.size >= 2 and np.any(np.diff(t) <= 0):
            raise ZvnavError("position timestamps must be strictly increasing")

    def __len__(self) -> int:
        return int(self.t.size)
