"""CSV and JSON file formats.

All CSVs carry a header row and SI units:
    - IMU log:        ``t,ax,ay,az,wx,wy,wz``
    - positions:      ``t,px,py,pz``
    - zero-velocity:  ``t,zv`` with zv in {0,1}
    - trajectory:     ``t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,zv``
    - detector trace: ``t,statistic,flag``

Parse errors raise :class:`~zvnav.errors.DataFormatError` with the offending
line number.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import ImuSequence, TimedPositions
from .errors import DataFormatError, ZvnavError

IMU_HEADER = ["t", "ax", "ay", "az", "wx", "wy", "wz"]
POSITIONS_HEADER = ["t", "px", "py", "pz"]
LABELS_HEADER = ["t", "zv"]
TRAJECTORY_HEADER = ["t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "zv"]
TRACE_HEADER = ["t", "statistic", "flag"]


def _read_table(path, expected_header: list[str]) -> np.ndarray:
    """Read a headed numeric CSV, reporting the line number of any bad row."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataFormatError("file is empty", path=path, line=1)
            header = [h.strip() for h in header]
            if header != expected_header:
                raise DataFormatError(
                    f"expected header {','.join(expected_header)!r}, got {','.join(header)!r}",
                    path=path,
                    line=1,
                )
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != len(expected_header):
                    raise DataFormatError(
                        f"expected {len(expected_header)} fields, got {len(row)}",
                        path=path,
                        line=lineno,
                    )
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise DataFormatError(str(exc), path=path, line=lineno)
    except OSError as exc:
        raise DataFormatError(str(exc), path=path)
    if not rows:
        raise DataFormatError("no data rows", path=path)
    return np.asarray(rows, dtype=float)


def _write_table(path, header: list[str], columns: np.ndarray, fmt: str = "%.9g") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, columns, fmt=fmt, delimiter=",")


def read_imu_csv(path, nominal_rate: float | None = None) -> ImuSequence:
    """Load an IMU log.

    The nominal rate is inferred from the median timestamp spacing unless
    given. Monotonicity and gap checks are enforced by :class:`ImuSequence`,
    re-raised here with the file path attached.
    """
    data = _read_table(path, IMU_HEADER)
    if data.shape[0] < 2:
        raise DataFormatError("an IMU log needs at least 2 samples", path=path)
    t = data[:, 0]
    if nominal_rate is None:
        dts = np.diff(t)
        if np.any(dts <= 0):
            k = int(np.argmax(dts <= 0))
            raise DataFormatError(
                f"timestamps not strictly increasing (t={t[k + 1]:.6f} after {t[k]:.6f})",
                path=path,
                line=k + 3,
            )
        nominal_rate = 1.0 / float(np.median(dts))
    try:
        return ImuSequence(t, data[:, 1:4], data[:, 4:7], nominal_rate)
    except ZvnavError as exc:
        raise DataFormatError(str(exc), path=path)


def write_imu_csv(path, seq: ImuSequence) -> None:
    cols = np.column_stack([seq.t, seq.accel, seq.gyro])
    _write_table(path, IMU_HEADER, cols, fmt="%.12g")


def read_positions_csv(path) -> TimedPositions:
    data = _read_table(path, POSITIONS_HEADER)
    try:
        return TimedPositions(data[:, 0], data[:, 1:4])
    except ZvnavError as exc:
        raise DataFormatError(str(exc), path=path)


def write_positions_csv(path, track: TimedPositions) -> None:
    _write_table(path, POSITIONS_HEADER, np.column_stack([track.t, track.xyz]), fmt="%.12g")


def read_labels_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (t, zv) with zv as a uint8 0/1 array."""
    data = _read_table(path, LABELS_HEADER)
    zv = data[:, 1]
    if not np.all((zv == 0) | (zv == 1)):
        bad = int(np.argmax((zv != 0) & (zv != 1)))
        raise DataFormatError(f"zv must be 0 or 1, got {zv[bad]}", path=path, line=bad + 2)
    return data[:, 0], zv.astype(np.uint8)


def write_labels_csv(path, t: np.ndarray, zv: np.ndarray) -> None:
    cols = np.column_stack([t, np.asarray(zv, dtype=int)])
    _write_table(path, LABELS_HEADER, cols, fmt=["%.12g", "%d"])


def write_trace_csv(path, t, statistic, flag) -> None:
    cols = np.column_stack([t, statistic, np.asarray(flag, dtype=int)])
    _write_table(path, TRACE_HEADER, cols, fmt=["%.12g", "%.12g", "%d"])


def save_trial(directory, trial, motion: str | None = None) -> None:
    """Write a trial directory: imu.csv plus whatever ground truth exists."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_imu_csv(directory / "imu.csv", trial.imu)
    meta = {"schema_version": 1, "nominal_rate": trial.imu.nominal_rate}
    label = motion if motion is not None else trial.motion_label
    if label is not None:
        meta["motion"] = label
    if trial.gt_positions is not None:
        write_positions_csv(directory / "gt_positions.csv", trial.gt_positions)
    if trial.gt_zv is not None:
        write_labels_csv(directory / "gt_zv.csv", trial.imu.t, trial.gt_zv)
    write_json(directory / "trial.json", meta)


def load_trial(directory):
    """Read a trial directory written by :func:`save_trial` (or hand-built)."""
    from .threshold_opt import TrialRecord

    directory = Path(directory)
    imu_path = directory / "imu.csv"
    if not imu_path.exists():
        raise DataFormatError("trial directory has no imu.csv", path=directory)
    meta = {}
    if (directory / "trial.json").exists():
        meta = read_json(directory / "trial.json")
    seq = read_imu_csv(imu_path, nominal_rate=meta.get("nominal_rate"))
    gt_positions = None
    if (directory / "gt_positions.csv").exists():
        gt_positions = read_positions_csv(directory / "gt_positions.csv")
    gt_zv = None
    for name in ("labels.csv", "gt_zv.csv"):
        if (directory / name).exists():
            t_zv, zv = read_labels_csv(directory / name)
            if t_zv.shape[0] != len(seq):
                raise DataFormatError(
                    f"{name} has {t_zv.shape[0]} rows but imu.csv has {len(seq)}",
                    path=directory / name,
                )
            gt_zv = zv
            break
    return TrialRecord(
        imu=seq, gt_positions=gt_positions, gt_zv=gt_zv, motion_label=meta.get("motion")
    )


def write_trajectory_csv(path, traj) -> None:
    cols = np.column_stack(
        [traj.t, traj.pos, traj.vel, traj.quat, traj.zupt.astype(int)]
    )
    fmt = ["%.12g"] * 11 + ["%d"]
    _write_table(path, TRAJECTORY_HEADER, cols, fmt=fmt)


def read_trajectory_csv(path):
    from .eskf import Trajectory

    data = _read_table(path, TRAJECTORY_HEADER)
    return Trajectory(
        t=data[:, 0],
        pos=data[:, 1:4],
        vel=data[:, 4:7],
        quat=data[:, 7:11],
        zupt=data[:, 11].astype(np.uint8),
    )


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataFormatError(str(exc), path=path)
    except json.JSONDecodeError as exc:
        raise DataFormatError(exc.msg, path=path, line=exc.lineno)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
