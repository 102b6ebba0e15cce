"""Deterministic synthetic gait generator with exact ground truth.

Foot trajectories are built from piecewise-quintic swing arcs separated by
exact stationary dwells, so position, velocity, and acceleration are C2 and
available in closed form. IMU samples are derived analytically from those
kinematics with integrating-sensor semantics: each accelerometer sample is
the interval's specific-force increment (velocity change minus gravity)
resolved in the sensor frame at the interval start, and each gyro sample is
the interval's rotation increment over its duration; the sensor frame's
pitch oscillates during swing. Ground-truth positions and zero-velocity
labels are exact by construction (a step is stationary iff analytic foot
speed is below 1e-9 m/s).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ImuSequence, TimedPositions
from .errors import KinematicsError, ZvnavError
from .threshold_opt import TrialRecord

MOTIONS = ("walk", "run", "stair_up", "stair_down", "stationary")
SPEED_EPS = 1e-9  # m/s; analytic speed below this is labelled stationary


@dataclass(frozen=True)
class GaitProfile:
    """Kinematic parameters of one synthetic motion type."""

    motion: str = "walk"
    stride_length: float = 0.7
    stride_period: float = 1.1
    stance_fraction: float = 0.45
    step_rise: float = 0.0
    imu_rate: float = 200.0
    noise_accel: float = 0.0
    noise_gyro: float = 0.0
    seed: int = 0
    clearance: float = 0.05
    pitch_amplitude: float = 0.5
    route: str = "straight"
    initial_dwell: float = 1.0
    gravity: float = 9.8065

    def __post_init__(self):
        if self.motion not in MOTIONS:
            raise ZvnavError(f"unknown motion {self.motion!r}; expected one of {MOTIONS}")
        if not (0.1 < self.stance_fraction < 0.9):
            raise ZvnavError(f"stance_fraction must lie in (0.1, 0.9), got {self.stance_fraction}")
        if self.imu_rate <= 0 or self.stride_period <= 0:
            raise ZvnavError("rates and periods must be positive")
        if self.route not in ("straight", "out_and_back"):
            raise ZvnavError(f"route must be 'straight' or 'out_and_back', got {self.route!r}")

    @classmethod
    def walk(cls, **kw) -> "GaitProfile":
        return cls(motion="walk", **kw)

    @classmethod
    def run(cls, **kw) -> "GaitProfile":
        defaults = dict(
            stride_length=1.2,
            stride_period=0.7,
            stance_fraction=0.30,
            clearance=0.10,
            pitch_amplitude=1.2,
        )
        defaults.update(kw)
        return cls(motion="run", **defaults)

    @classmethod
    def stair_up(cls, **kw) -> "GaitProfile":
        defaults = dict(
            stride_length=0.25,
            stride_period=1.5,
            stance_fraction=0.55,
            step_rise=0.171,
            clearance=0.15,
            pitch_amplitude=0.35,
        )
        defaults.update(kw)
        return cls(motion="stair_up", **defaults)

    @classmethod
    def stair_down(cls, **kw) -> "GaitProfile":
        defaults = dict(
            stride_length=0.25,
            stride_period=1.5,
            stance_fraction=0.55,
            step_rise=-0.171,
            clearance=0.15,
            pitch_amplitude=0.35,
        )
        defaults.update(kw)
        return cls(motion="stair_down", **defaults)

    @classmethod
    def stationary(cls, **kw) -> "GaitProfile":
        return cls(motion="stationary", **kw)


# Quintic smoothstep: zero first and second derivatives at both ends.


def _smoothstep(tau):
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)


def _smoothstep_d1(tau):
    return 30.0 * tau**2 * (1.0 - 2.0 * tau + tau**2)


def _smoothstep_d2(tau):
    return 60.0 * tau - 180.0 * tau**2 + 120.0 * tau**3


def _bump(tau):
    """C2 bump: 0 -> 1 -> 0 with vanishing first/second derivatives at ends."""
    tau = np.asarray(tau)
    up = tau <= 0.5
    out = np.where(up, _smoothstep(2.0 * tau), _smoothstep(2.0 - 2.0 * tau))
    return out


def _bump_d1(tau):
    tau = np.asarray(tau)
    up = tau <= 0.5
    return np.where(up, 2.0 * _smoothstep_d1(2.0 * tau), -2.0 * _smoothstep_d1(2.0 - 2.0 * tau))


def _bump_d2(tau):
    tau = np.asarray(tau)
    up = tau <= 0.5
    return np.where(up, 4.0 * _smoothstep_d2(2.0 * tau), 4.0 * _smoothstep_d2(2.0 - 2.0 * tau))


@dataclass(frozen=True)
class _Swing:
    t0: float
    t1: float
    start: np.ndarray
    disp: np.ndarray
    clearance: float
    pitch_amplitude: float


def _plan_segments(profile: GaitProfile, duration: float):
    """Lay out dwell/stance/swing segments; returns (swings, end_position)."""
    if duration < 2.0 * profile.stride_period:
        raise ZvnavError(
            f"duration {duration} s shorter than two stride periods "
            f"({2 * profile.stride_period} s)"
        )
    swings: list[_Swing] = []
    pos = np.zeros(3)
    if profile.motion == "stationary":
        return swings, pos

    t_cursor = profile.initial_dwell
    usable = duration - profile.initial_dwell
    n_strides = int(usable // profile.stride_period)
    directions = np.ones(n_strides)
    if profile.route == "out_and_back":
        n_strides -= n_strides % 2
        directions = np.ones(n_strides)
        directions[n_strides // 2 :] = -1.0
    if n_strides < 1:
        raise ZvnavError("duration leaves no room for a full stride after the initial dwell")

    stance_T = profile.stance_fraction * profile.stride_period
    swing_T = profile.stride_period - stance_T
    for k in range(n_strides):
        t_swing0 = t_cursor + stance_T
        disp = np.array(
            [directions[k] * profile.stride_length, 0.0, directions[k] * profile.step_rise]
        )
        swings.append(
            _Swing(t_swing0, t_swing0 + swing_T, pos.copy(), disp, profile.clearance,
                   profile.pitch_amplitude)
        )
        pos = pos + disp
        t_cursor += profile.stride_period
    return swings, pos


def _check_feasible(profile: GaitProfile) -> None:
    swing_T = (1.0 - profile.stance_fraction) * profile.stride_period
    # peak of the bump derivative is 2 * 15/8 = 3.75
    omega_max = 3.75 * profile.pitch_amplitude / swing_T
    if omega_max / profile.imu_rate > np.pi:
        raise KinematicsError(
            f"swing implies {omega_max:.1f} rad/s peak rotation, above pi per sample "
            f"at {profile.imu_rate} Hz"
        )


def _evaluate(swings, t):
    """Closed-form position, velocity, acceleration, pitch, pitch rate at times t."""
    n = t.shape[0]
    pos = np.zeros((n, 3))
    vel = np.zeros((n, 3))
    acc = np.zeros((n, 3))
    pitch = np.zeros(n)
    pitch_rate = np.zeros(n)

    # between swings the foot holds the position reached so far
    hold = np.zeros(3)
    prev_end = -np.inf
    for sw in swings:
        before = (t >= prev_end) & (t < sw.t0)
        pos[before] = hold
        inside = (t >= sw.t0) & (t < sw.t1)
        if np.any(inside):
            T = sw.t1 - sw.t0
            tau = (t[inside] - sw.t0) / T
            s, s1, s2 = _smoothstep(tau), _smoothstep_d1(tau), _smoothstep_d2(tau)
            b, b1, b2 = _bump(tau), _bump_d1(tau), _bump_d2(tau)
            pos[inside] = sw.start + np.outer(s, sw.disp)
            pos[inside, 2] += sw.clearance * b
            vel[inside] = np.outer(s1 / T, sw.disp)
            vel[inside, 2] += sw.clearance * b1 / T
            acc[inside] = np.outer(s2 / T**2, sw.disp)
            acc[inside, 2] += sw.clearance * b2 / T**2
            pitch[inside] = sw.pitch_amplitude * b
            pitch_rate[inside] = sw.pitch_amplitude * b1 / T
        hold = sw.start + sw.disp
        prev_end = sw.t1
    after = t >= prev_end
    pos[after] = hold
    return pos, vel, acc, pitch, pitch_rate


def _imu_from_kinematics(vel, acc, pitch, pitch_rate, rate, gravity):
    """Ideal integrating-IMU outputs for the sampled foot kinematics.

    Accelerometer: per-interval specific-force increment (delta-v minus
    gravity) resolved in the sensor frame at the start of the interval.
    Gyro: per-interval rotation increment divided by the interval. Both are
    closed-form in the analytic velocity/pitch, and match how delta-v /
    delta-theta sensors report. Sample 0 falls back to instantaneous values.
    """
    n = vel.shape[0]
    fx = np.empty(n)
    fz = np.empty(n)
    # specific force in the navigation frame, averaged over each interval
    fx[1:] = (vel[1:, 0] - vel[:-1, 0]) * rate
    fz[1:] = (vel[1:, 2] - vel[:-1, 2]) * rate + gravity
    fx[0] = acc[0, 0]
    fz[0] = acc[0, 2] + gravity
    # resolve in the sensor frame at the start of each interval
    th = np.empty(n)
    th[1:] = pitch[:-1]
    th[0] = pitch[0]
    c, s = np.cos(th), np.sin(th)
    accel = np.zeros((n, 3))
    accel[:, 0] = c * fx - s * fz
    accel[:, 2] = s * fx + c * fz
    gyro = np.zeros((n, 3))
    gyro[1:, 1] = (pitch[1:] - pitch[:-1]) * rate
    gyro[0, 1] = pitch_rate[0]
    return accel, gyro


def simulate(profile: GaitProfile, duration: float) -> TrialRecord:
    """Generate one motion trial with exact ground truth.

    Returns a trial whose IMU sequence, positions, and zero-velocity labels
    share timestamps one-to-one. With ``route="out_and_back"`` the true
    trajectory returns exactly to the origin, making loop-closure error a
    true error measure.
    """
    _check_feasible(profile)
    swings, _ = _plan_segments(profile, duration)
    n = int(round(duration * profile.imu_rate))
    t = np.arange(n) / profile.imu_rate

    pos, vel, acc, pitch, pitch_rate = _evaluate(swings, t)
    accel, gyro = _imu_from_kinematics(vel, acc, pitch, pitch_rate, profile.imu_rate,
                                       profile.gravity)

    speed = np.sqrt((vel * vel).sum(axis=1))
    gt_zv = (speed < SPEED_EPS).astype(np.uint8)

    if profile.noise_accel > 0 or profile.noise_gyro > 0:
        rng = np.random.default_rng(profile.seed)
        if profile.noise_accel > 0:
            accel = accel + rng.normal(0.0, profile.noise_accel, size=accel.shape)
        if profile.noise_gyro > 0:
            gyro = gyro + rng.normal(0.0, profile.noise_gyro, size=gyro.shape)

    seq = ImuSequence(t, accel, gyro, profile.imu_rate)
    return TrialRecord(
        imu=seq,
        gt_positions=TimedPositions(t, pos),
        gt_zv=gt_zv,
        motion_label=None if profile.motion == "stationary" else _motion_class(profile.motion),
    )


def _motion_class(motion: str) -> str:
    return {"walk": "walk", "run": "run", "stair_up": "stair", "stair_down": "stair"}[motion]


def simulate_sequence(parts: list[tuple[GaitProfile, float]]) -> TrialRecord:
    """Chain several profiles into one continuous trial.

    Each part starts and ends in a dwell, so concatenation preserves C2
    continuity; positions accumulate and timestamps stay uniform. All parts
    must share the IMU rate. Per-part noise seeds are derived from the part's
    own profile seed and index.
    """
    if not parts:
        raise ZvnavError("simulate_sequence needs at least one part")
    rate = parts[0][0].imu_rate
    t_list, accel_list, gyro_list, pos_list, zv_list = [], [], [], [], []
    t_offset = 0.0
    p_offset = np.zeros(3)
    for i, (profile, duration) in enumerate(parts):
        if profile.imu_rate != rate:
            raise ZvnavError("all parts must share one IMU rate")
        trial = simulate(replace(profile, seed=profile.seed + i), duration)
        t_list.append(trial.imu.t + t_offset)
        accel_list.append(trial.imu.accel)
        gyro_list.append(trial.imu.gyro)
        pos_list.append(trial.gt_positions.xyz + p_offset)
        zv_list.append(trial.gt_zv)
        t_offset += len(trial.imu) / rate
        p_offset = p_offset + trial.gt_positions.xyz[-1]
    t = np.concatenate(t_list)
    seq = ImuSequence(t, np.concatenate(accel_list), np.concatenate(gyro_list), rate)
    return TrialRecord(
        imu=seq,
        gt_positions=TimedPositions(t, np.concatenate(pos_list)),
        gt_zv=np.concatenate(zv_list),
        motion_label=None,
    )


def vertical_raise_trial(
    duration: float,
    rise: float = 0.5,
    hold_speed: float = 0.4,
    blend: float = 0.4,
    dwell: float = 0.8,
    imu_rate: float = 200.0,
    noise_accel: float = 0.0,
    noise_gyro: float = 0.0,
    seed: int = 0,
    gravity: float = 9.8065,
) -> TrialRecord:
    """Rotation-free vertical foot motion: raise, hold speed, lower, repeat.

    The foot moves straight up and down with long constant-velocity segments
    and never rotates, so angular-rate-based detection carries no signal and
    the accelerometer reads pure gravity during the constant-velocity holds.
    """
    hold_T = rise / hold_speed - blend  # blends contribute blend/2 of travel each
    if hold_T <= 0:
        raise ZvnavError("rise too small for the requested hold_speed and blend")
    cycle = 2.0 * (dwell + 2.0 * blend + hold_T)
    n_cycles = int(duration // cycle)
    if n_cycles < 1:
        raise ZvnavError(f"duration {duration} s too short for one raise/lower cycle ({cycle} s)")

    n = int(round(duration * imu_rate))
    t = np.arange(n) / imu_rate

    # piecewise segments: (t0, t1, kind, sign, z at t0)
    events = []
    t_cursor = 0.0
    z = 0.0
    for _ in range(n_cycles):
        for sign in (+1.0, -1.0):
            events.append((t_cursor, t_cursor + dwell, "dwell", sign, z))
            t_cursor += dwell
            events.append((t_cursor, t_cursor + blend, "blend_in", sign, z))
            t_cursor += blend
            z += sign * hold_speed * blend / 2.0
            events.append((t_cursor, t_cursor + hold_T, "hold", sign, z))
            t_cursor += hold_T
            z += sign * hold_speed * hold_T
            events.append((t_cursor, t_cursor + blend, "blend_out", sign, z))
            t_cursor += blend
            z += sign * hold_speed * blend / 2.0
    events.append((t_cursor, duration + 1.0, "dwell", 1.0, z))

    def evaluate(times):
        pos_z = np.zeros(times.shape[0])
        vel_z = np.zeros(times.shape[0])
        acc_z = np.zeros(times.shape[0])
        for t0, t1, kind, sign, z0 in events:
            m = (times >= t0) & (times < t1)
            if not np.any(m):
                continue
            if kind == "dwell":
                pos_z[m] = z0
            elif kind == "hold":
                vel_z[m] = sign * hold_speed
                pos_z[m] = z0 + sign * hold_speed * (times[m] - t0)
            else:
                tau = (times[m] - t0) / blend
                if kind == "blend_in":
                    shape, d1 = _smoothstep(tau), _smoothstep_d1(tau)
                else:
                    shape, d1 = 1.0 - _smoothstep(tau), -_smoothstep_d1(tau)
                vel_z[m] = sign * hold_speed * shape
                acc_z[m] = sign * hold_speed * d1 / blend
                integ = tau**4 * (2.5 - 3.0 * tau + tau**2)  # integral of the smoothstep
                if kind == "blend_in":
                    pos_z[m] = z0 + sign * hold_speed * blend * integ
                else:
                    pos_z[m] = z0 + sign * hold_speed * blend * (tau - integ)
        return pos_z, vel_z, acc_z

    pos_z, vel_z, acc_z = evaluate(t)

    pos = np.zeros((n, 3))
    pos[:, 2] = pos_z
    accel = np.zeros((n, 3))
    # integrating-sensor semantics: per-interval velocity increment plus gravity
    accel[1:, 2] = (vel_z[1:] - vel_z[:-1]) * imu_rate + gravity
    accel[0, 2] = acc_z[0] + gravity
    gyro = np.zeros((n, 3))
    gt_zv = (np.abs(vel_z) < SPEED_EPS).astype(np.uint8)

    if noise_accel > 0 or noise_gyro > 0:
        rng = np.random.default_rng(seed)
        if noise_accel > 0:
            accel = accel + rng.normal(0.0, noise_accel, size=accel.shape)
        if noise_gyro > 0:
            gyro = gyro + rng.normal(0.0, noise_gyro, size=gyro.shape)

    seq = ImuSequence(t, accel, gyro, imu_rate)
    return TrialRecord(
        imu=seq, gt_positions=TimedPositions(t, pos), gt_zv=gt_zv, motion_label=None
    )
