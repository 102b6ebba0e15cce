"""Strapdown propagation and error-state Kalman filtering with ZUPT corrections.

The nominal state (position, velocity, attitude quaternion) is propagated by
first-order integration of the inertial measurements; a 9-D error state
(dp, dv, dtheta) carries the covariance. Attitude error is a small rotation
applied on the right of the nominal attitude. A zero-velocity update is a
Kalman correction with pseudo-measurement z = 0 of the velocity block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import (
    ImuSequence,
    NavState,
    Quaternion,
    quat_from_axis_angle,
    quat_from_two_vectors,
    quat_increment,
    quat_multiply,
    quat_to_rotmat,
)
from .errors import FilterDivergenceError, ZvnavError

MAX_STEP_DT = 0.1  # s; larger propagation intervals indicate broken logs


@dataclass(frozen=True)
class FilterConfig:
    """Noise levels and initial uncertainty for the error-state filter.

    ``sigma_accel_noise`` / ``sigma_gyro_noise`` are white-noise densities
    (m/s^2/sqrt(Hz), rad/s/sqrt(Hz)); ``sigma_zupt`` is the zero-velocity
    pseudo-measurement standard deviation (m/s). ``init_std`` gives the
    initial per-axis standard deviations of the (dp, dv, dtheta) blocks.
    """

    sigma_accel_noise: float = 0.02
    sigma_gyro_noise: float = 0.002
    sigma_zupt: float = 0.01
    gravity: float = 9.8065
    init_std: tuple[float, float, float] = (1e-3, 1e-3, 1e-3)
    levelling_samples: int = 100

    def __post_init__(self):
        values = (
            self.sigma_accel_noise,
            self.sigma_gyro_noise,
            self.sigma_zupt,
            self.gravity,
            *self.init_std,
        )
        if any(v <= 0 for v in values):
            raise ZvnavError(f"FilterConfig values must be strictly positive: {self}")
        if self.levelling_samples < 1:
            raise ZvnavError("levelling_samples must be >= 1")

    def initial_covariance(self) -> "ErrorCovariance":
        d = np.repeat(np.square(self.init_std), 3)
        return ErrorCovariance(np.diag(d))


@dataclass(frozen=True)
class ErrorCovariance:
    """9x9 covariance over the (dp, dv, dtheta) error state."""

    matrix: np.ndarray

    SYMMETRY_TOL = 1e-10
    EIGENVALUE_FLOOR = -1e-9

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.shape != (9, 9):
            raise ZvnavError(f"covariance must be 9x9, got {m.shape}")

    def validate(self) -> None:
        m = self.matrix
        asym = float(np.max(np.abs(m - m.T)))
        if asym > self.SYMMETRY_TOL:
            raise ZvnavError(f"covariance asymmetric by {asym:.3e}")
        smallest = float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())
        if smallest < self.EIGENVALUE_FLOOR:
            raise ZvnavError(f"covariance indefinite: min eigenvalue {smallest:.3e}")


@dataclass(frozen=True)
class Trajectory:
    """Filter output: one (t, NavState) row per input sample plus ZUPT flags."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    quat: np.ndarray
    zupt: np.ndarray

    def __post_init__(self):
        n = self.t.shape[0]
        if not (
            self.pos.shape == (n, 3)
            and self.vel.shape == (n, 3)
            and self.quat.shape == (n, 4)
            and self.zupt.shape == (n,)
        ):
            raise ZvnavError("trajectory arrays have inconsistent shapes")

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def states(self) -> list[NavState]:
        return [
            NavState(self.pos[i], self.vel[i], Quaternion.from_array(self.quat[i]))
            for i in range(len(self))
        ]


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def error_transition(state: NavState, accel, gyro, dt: float) -> np.ndarray:
    """Discrete error-state Jacobian F of the motion model.

    Row blocks are (dp, dv, dtheta). The attitude block is the exact
    transport of a right-multiplicative attitude error through the rotation
    increment; the velocity-attitude coupling is first order.
    """
    a = np.asarray(accel, dtype=float)
    w = np.asarray(gyro, dtype=float)
    R = quat_to_rotmat(state.q)
    F = np.eye(9)
    F[0:3, 3:6] = dt * np.eye(3)
    F[3:6, 6:9] = -(R @ _skew(a)) * dt
    F[6:9, 6:9] = quat_to_rotmat(quat_from_axis_angle(-w * dt))
    return F


def process_noise(cfg: FilterConfig, dt: float) -> np.ndarray:
    """First-order discretization of the measurement white noise."""
    Q = np.zeros((9, 9))
    Q[3:6, 3:6] = cfg.sigma_accel_noise**2 * dt * np.eye(3)
    Q[6:9, 6:9] = cfg.sigma_gyro_noise**2 * dt * np.eye(3)
    return Q


def propagate(
    state: NavState,
    cov: ErrorCovariance,
    sample,
    dt: float,
    cfg: FilterConfig,
) -> tuple[NavState, ErrorCovariance]:
    """One strapdown step: advance the nominal state and its covariance.

    ``sample`` is an :class:`~zvnav.core.ImuSample`. The position update uses
    the pre-update velocity; the velocity update rotates the specific force
    into the navigation frame and removes gravity; the attitude integrates the
    gyro sample exactly.
    """
    if not (0.0 < dt <= MAX_STEP_DT):
        raise ZvnavError(f"dt must lie in (0, {MAX_STEP_DT}] s, got {dt}")
    a = np.asarray(sample.accel, dtype=float)
    w = np.asarray(sample.gyro, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(w))):
        raise ZvnavError("IMU sample contains non-finite values")

    R = quat_to_rotmat(state.q)
    g_nav = np.array([0.0, 0.0, -cfg.gravity])
    p_new = state.p + state.v * dt
    v_new = state.v + (R @ a + g_nav) * dt
    q_new = quat_increment(state.q, w, dt)

    F = error_transition(state, a, w, dt)
    P = F @ cov.matrix @ F.T + process_noise(cfg, dt)
    P = 0.5 * (P + P.T)
    return NavState(p_new, v_new, q_new), ErrorCovariance(P)


def zupt_update(
    state: NavState, cov: ErrorCovariance, cfg: FilterConfig
) -> tuple[NavState, ErrorCovariance]:
    """Zero-velocity pseudo-measurement update.

    Standard Kalman correction with z = 0, H = [0 I 0], R = sigma_zupt^2 I;
    the resulting error estimate is folded back into the nominal state and
    the covariance is updated in Joseph form (symmetric, PSD-preserving).
    """
    P = cov.matrix
    r = cfg.sigma_zupt**2
    S = P[3:6, 3:6] + r * np.eye(3)
    K = P[:, 3:6] @ np.linalg.inv(S)
    dx = K @ (-state.v)

    p_new = state.p + dx[0:3]
    v_new = state.v + dx[3:6]
    q_new = quat_multiply(state.q, quat_from_axis_angle(dx[6:9])).normalized()

    IKH = np.eye(9)
    IKH[:, 3:6] -= K
    P_new = IKH @ P @ IKH.T + r * (K @ K.T)
    P_new = 0.5 * (P_new + P_new.T)
    return NavState(p_new, v_new, q_new), ErrorCovariance(P_new)


def level_attitude(seq: ImuSequence, n_samples: int) -> Quaternion:
    """Initial roll/pitch from the mean accelerometer direction; yaw = 0.

    The minimal rotation mapping the mean specific-force direction onto +z
    has a horizontal axis, so it carries no yaw component.
    """
    n = min(n_samples, len(seq))
    mean_acc = seq.accel[:n].mean(axis=0)
    if np.linalg.norm(mean_acc) < 1e-9:
        raise ZvnavError("mean accel over levelling window is near zero")
    return quat_from_two_vectors(mean_acc, np.array([0.0, 0.0, 1.0]))


def run_filter(seq: ImuSequence, flags, cfg: FilterConfig | None = None) -> Trajectory:
    """Run the full zero-velocity-aided filter over an IMU sequence.

    ``flags`` holds one stationary flag per sample; a zero-velocity update is
    applied at every flagged timestep. The initial state is p = v = 0 with
    attitude levelled from the first ``cfg.levelling_samples`` samples.
    Output is deterministic: identical inputs give bit-identical trajectories.
    """
    if cfg is None:
        cfg = FilterConfig()
    flags = np.asarray(flags)
    if flags.shape[0] != len(seq):
        raise ZvnavError(
            f"flags length {flags.shape[0]} does not match sequence length {len(seq)}"
        )
    if len(seq) < 2:
        raise ZvnavError("filter needs at least 2 samples")
    dts = np.diff(seq.t)
    if np.any(dts > MAX_STEP_DT):
        k = int(np.argmax(dts > MAX_STEP_DT))
        raise ZvnavError(f"inter-sample gap {dts[k]:.4f} s at index {k + 1} too large")

    q0 = level_attitude(seq, cfg.levelling_samples)
    P0 = cfg.initial_covariance().matrix
    try:
        pos, vel, quat, applied, _ = _kernels.eskf_run(
            seq.t,
            seq.accel,
            seq.gyro,
            np.ascontiguousarray(flags, dtype=np.uint8),
            q0.as_array(),
            P0,
            cfg.sigma_accel_noise,
            cfg.sigma_gyro_noise,
            cfg.sigma_zupt,
            cfg.gravity,
        )
    except ArithmeticError as exc:
        raise FilterDivergenceError(str(exc)) from exc
    return Trajectory(seq.t.copy(), pos, vel, quat, applied)
