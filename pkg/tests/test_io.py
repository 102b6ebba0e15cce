import numpy as np
import pytest

from zvnav import io
from zvnav.core import ImuSequence, TimedPositions
from zvnav.errors import DataFormatError
from zvnav.eskf import Trajectory


@pytest.fixture
def seq():
    t = np.arange(100) / 200.0
    rng = np.random.default_rng(0)
    return ImuSequence(t, rng.normal(0, 1, (100, 3)), rng.normal(0, 1, (100, 3)), 200.0)


def test_imu_round_trip(tmp_path, seq):
    path = tmp_path / "imu.csv"
    io.write_imu_csv(path, seq)
    back = io.read_imu_csv(path)
    np.testing.assert_allclose(back.t, seq.t, atol=1e-12)
    np.testing.assert_allclose(back.accel, seq.accel, rtol=1e-10)
    assert back.nominal_rate == pytest.approx(200.0)


def test_wrong_header_reports_line_1(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,ax,ay,az,wx,wy,wz\n0,0,0,9.8,0,0,0\n")
    with pytest.raises(DataFormatError, match=":1"):
        io.read_imu_csv(path)


def test_bad_value_reports_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    rows = ["t,ax,ay,az,wx,wy,wz"] + [f"{i / 200},0,0,9.8,0,0,0" for i in range(5)]
    rows[3] = "0.01,0,spam,9.8,0,0,0"
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataFormatError, match=":4"):
        io.read_imu_csv(path)


def test_wrong_field_count_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,px,py,pz\n0,1,2\n")
    with pytest.raises(DataFormatError, match=":2"):
        io.read_positions_csv(path)


def test_labels_validation(tmp_path):
    path = tmp_path / "zv.csv"
    path.write_text("t,zv\n0,0\n0.005,2\n")
    with pytest.raises(DataFormatError, match="zv must be 0 or 1"):
        io.read_labels_csv(path)


def test_labels_round_trip(tmp_path):
    t = np.arange(10) / 100.0
    zv = (np.arange(10) % 2).astype(np.uint8)
    io.write_labels_csv(tmp_path / "zv.csv", t, zv)
    t2, zv2 = io.read_labels_csv(tmp_path / "zv.csv")
    np.testing.assert_array_equal(zv2, zv)


def test_trajectory_round_trip(tmp_path):
    n = 20
    rng = np.random.default_rng(1)
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    traj = Trajectory(
        t=np.arange(n) / 100.0,
        pos=rng.normal(size=(n, 3)),
        vel=rng.normal(size=(n, 3)),
        quat=q,
        zupt=(rng.random(n) < 0.5).astype(np.uint8),
    )
    io.write_trajectory_csv(tmp_path / "traj.csv", traj)
    back = io.read_trajectory_csv(tmp_path / "traj.csv")
    np.testing.assert_allclose(back.pos, traj.pos, rtol=1e-10)
    np.testing.assert_array_equal(back.zupt, traj.zupt)


def test_trial_round_trip(tmp_path, seq):
    from zvnav.threshold_opt import TrialRecord

    trial = TrialRecord(
        imu=seq,
        gt_positions=TimedPositions(seq.t, np.cumsum(np.ones((100, 3)), axis=0)),
        gt_zv=(np.arange(100) % 2).astype(np.uint8),
        motion_label="walk",
    )
    io.save_trial(tmp_path / "trial", trial)
    back = io.load_trial(tmp_path / "trial")
    assert back.motion_label == "walk"
    np.testing.assert_array_equal(back.gt_zv, trial.gt_zv)
    np.testing.assert_allclose(back.gt_positions.xyz, trial.gt_positions.xyz, rtol=1e-10)


def test_load_trial_missing_imu(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DataFormatError, match="imu.csv"):
        io.load_trial(tmp_path / "empty")


def test_read_json_error_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"a": 1,\n "b": }\n')
    with pytest.raises(DataFormatError, match=":2"):
        io.read_json(path)
