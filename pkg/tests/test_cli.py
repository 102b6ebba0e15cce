import json

import numpy as np
import pytest
from click.testing import CliRunner

from zvnav import io
from zvnav.cli import main
from zvnav.gait_sim import GaitProfile, simulate


@pytest.fixture
def runner():
    return CliRunner()


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def walk_trial_dir(tmp_path):
    trial = simulate(GaitProfile.walk(route="out_and_back"), 60.0)
    io.save_trial(tmp_path / "trial", trial)
    return tmp_path / "trial"


class TestSimulate:
    def test_writes_trial_files(self, runner, tmp_path):
        profile = write_json(
            tmp_path / "p.json", {"schema_version": 1, "motion": "walk"}
        )
        result = runner.invoke(
            main, ["simulate", "--profile", profile, "--duration", "5",
                   "--out", str(tmp_path / "out")]
        )
        assert result.exit_code == 0, result.output
        for name in ("imu.csv", "gt_positions.csv", "gt_zv.csv", "trial.json"):
            assert (tmp_path / "out" / name).exists()

    def test_unknown_profile_field_rejected(self, runner, tmp_path):
        profile = write_json(
            tmp_path / "p.json", {"schema_version": 1, "motion": "walk", "cadence": 3}
        )
        result = runner.invoke(
            main, ["simulate", "--profile", profile, "--duration", "5",
                   "--out", str(tmp_path / "out")]
        )
        assert result.exit_code == 2
        assert "unknown fields" in result.output

    def test_missing_schema_version_rejected(self, runner, tmp_path):
        profile = write_json(tmp_path / "p.json", {"motion": "walk"})
        result = runner.invoke(
            main, ["simulate", "--profile", profile, "--duration", "5",
                   "--out", str(tmp_path / "out")]
        )
        assert result.exit_code == 2
        assert "schema_version" in result.output


class TestEndToEnd:
    def test_simulate_label_estimate_evaluate_round_trip(self, runner, tmp_path, walk_trial_dir):
        # label with the windowed detectors
        result = runner.invoke(
            main, ["label", "--trial", str(walk_trial_dir), "--detectors", "shoe,ared",
                   "--out", str(tmp_path / "labels")]
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "labels" / "label_report.json").read_text())
        assert report["winner"] == "shoe"

        # estimate with the labelled threshold
        config = write_json(
            tmp_path / "cfg.json",
            {"schema_version": 1, "shoe": {"threshold": report["threshold"]}},
        )
        result = runner.invoke(
            main, ["estimate", "--trial", str(walk_trial_dir), "--detector", "shoe",
                   "--config", config, "--out", str(tmp_path / "traj.csv")]
        )
        assert result.exit_code == 0, result.output

        # evaluate against the simulator ground truth
        result = runner.invoke(
            main, ["evaluate", "--traj", str(tmp_path / "traj.csv"),
                   "--gt", str(walk_trial_dir / "gt_positions.csv"),
                   "--report", str(tmp_path / "report.json")]
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["armse_m"] < 0.05

    def test_estimate_deterministic_byte_identical(self, runner, tmp_path, walk_trial_dir):
        config = write_json(
            tmp_path / "cfg.json", {"schema_version": 1, "shoe": {"threshold": 100.0}}
        )
        for name in ("a.csv", "b.csv"):
            result = runner.invoke(
                main, ["estimate", "--trial", str(walk_trial_dir), "--detector", "shoe",
                       "--config", config, "--out", str(tmp_path / name)]
            )
            assert result.exit_code == 0, result.output
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_evaluate_trajectory_against_itself(self, runner, tmp_path, walk_trial_dir):
        config = write_json(
            tmp_path / "cfg.json", {"schema_version": 1, "shoe": {"threshold": 100.0}}
        )
        runner.invoke(
            main, ["estimate", "--trial", str(walk_trial_dir), "--detector", "shoe",
                   "--config", config, "--out", str(tmp_path / "traj.csv")]
        )
        traj = io.read_trajectory_csv(tmp_path / "traj.csv")
        from zvnav.core import TimedPositions

        io.write_positions_csv(tmp_path / "self.csv", TimedPositions(traj.t, traj.pos))
        result = runner.invoke(
            main, ["evaluate", "--traj", str(tmp_path / "traj.csv"),
                   "--gt", str(tmp_path / "self.csv"),
                   "--report", str(tmp_path / "report.json")]
        )
        assert result.exit_code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["armse_m"] == 0.0


class TestErrors:
    def test_malformed_csv_exits_2_with_line_number(self, runner, tmp_path):
        trial = tmp_path / "trial"
        trial.mkdir()
        (trial / "imu.csv").write_text("t,ax,ay,az,wx,wy,wz\n0,0,0,9.8,0,0,bad\n")
        result = runner.invoke(
            main, ["label", "--trial", str(trial), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
        assert ":2" in result.output

    def test_malformed_json_exits_2(self, runner, tmp_path, walk_trial_dir):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        result = runner.invoke(
            main, ["estimate", "--trial", str(walk_trial_dir), "--detector", "shoe",
                   "--config", str(cfg), "--out", str(tmp_path / "t.csv")]
        )
        assert result.exit_code == 2

    def test_training_divergence_exits_3(self, runner, tmp_path, walk_trial_dir, monkeypatch):
        import zvnav.lstm as lstm_mod

        def poisoned(y, p):
            return float("nan")

        monkeypatch.setattr(lstm_mod, "loss", poisoned)
        cfg = write_json(
            tmp_path / "train.json",
            {"schema_version": 1, "epochs": 2, "windows_per_trial": 40,
             "num_layers": 1, "hidden_size": 4},
        )
        result = runner.invoke(
            main, ["train-lstm", "--trials", str(walk_trial_dir),
                   "--out", str(tmp_path / "m.json"), "--config", cfg]
        )
        assert result.exit_code == 3
        assert "non-finite" in result.output


class TestTraining:
    def test_train_svm_and_adaptive_estimate(self, runner, tmp_path):
        dirs = []
        for name, profile, dur in (
            ("walk", GaitProfile.walk(noise_accel=0.02, noise_gyro=0.002, seed=1), 20.0),
            ("run", GaitProfile.run(noise_accel=0.02, noise_gyro=0.002, seed=2), 15.0),
        ):
            trial = simulate(profile, dur)
            io.save_trial(tmp_path / name, trial, motion=name)
            dirs.append(str(tmp_path / name))
        cfg = write_json(
            tmp_path / "svm.json",
            {"schema_version": 1, "gamma": 1.0, "windows_per_trial": 60},
        )
        result = runner.invoke(
            main, ["train-svm", "--trials", ",".join(dirs),
                   "--out", str(tmp_path / "svm_model.json"), "--config", cfg]
        )
        assert result.exit_code == 0, result.output

        est_cfg = write_json(
            tmp_path / "est.json",
            {
                "schema_version": 1,
                "adaptive": {
                    "model": str(tmp_path / "svm_model.json"),
                    "table": {"walk": 300.0, "run": 10000.0, "stair": 300.0},
                },
            },
        )
        result = runner.invoke(
            main, ["estimate", "--trial", dirs[0], "--detector", "adaptive",
                   "--config", est_cfg, "--out", str(tmp_path / "traj.csv")]
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "traj.csv").exists()

    def test_train_lstm_and_estimate(self, runner, tmp_path):
        trial = simulate(GaitProfile.walk(noise_accel=0.02, noise_gyro=0.002, seed=4), 20.0)
        io.save_trial(tmp_path / "walk", trial)
        cfg = write_json(
            tmp_path / "train.json",
            {"schema_version": 1, "epochs": 3, "windows_per_trial": 60,
             "num_layers": 1, "hidden_size": 4, "batch_size": 32},
        )
        result = runner.invoke(
            main, ["train-lstm", "--trials", str(tmp_path / "walk"),
                   "--out", str(tmp_path / "lstm.json"), "--config", cfg]
        )
        assert result.exit_code == 0, result.output
        est_cfg = write_json(
            tmp_path / "est.json",
            {"schema_version": 1, "lstm": {"model": str(tmp_path / "lstm.json")}},
        )
        result = runner.invoke(
            main, ["estimate", "--trial", str(tmp_path / "walk"), "--detector", "lstm",
                   "--config", est_cfg, "--out", str(tmp_path / "traj.csv")]
        )
        assert result.exit_code == 0, result.output


class TestTrace:
    def test_estimate_writes_statistic_trace(self, runner, tmp_path, walk_trial_dir):
        config = write_json(
            tmp_path / "cfg.json", {"schema_version": 1, "shoe": {"threshold": 100.0}}
        )
        result = runner.invoke(
            main, ["estimate", "--trial", str(walk_trial_dir), "--detector", "shoe",
                   "--config", config, "--out", str(tmp_path / "traj.csv"),
                   "--trace", str(tmp_path / "trace.csv")]
        )
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "trace.csv").read_text().splitlines()
        assert lines[0] == "t,statistic,flag"
        trial = io.load_trial(walk_trial_dir)
        assert len(lines) == len(trial.imu) + 1

    def test_trace_rejected_for_learned_detectors(self, runner, tmp_path, walk_trial_dir):
        cfg = write_json(tmp_path / "cfg.json", {"schema_version": 1})
        result = runner.invoke(
            main, ["estimate", "--trial", str(walk_trial_dir), "--detector", "lstm",
                   "--config", cfg, "--out", str(tmp_path / "t.csv"),
                   "--trace", str(tmp_path / "trace.csv")]
        )
        assert result.exit_code == 2


class TestClassifyCommands:
    def test_classify_motion_trace(self, runner, tmp_path):
        dirs = []
        for name, profile, dur in (
            ("walk", GaitProfile.walk(noise_accel=0.02, noise_gyro=0.002, seed=1), 20.0),
            ("run", GaitProfile.run(noise_accel=0.02, noise_gyro=0.002, seed=2), 15.0),
        ):
            trial = simulate(profile, dur)
            io.save_trial(tmp_path / name, trial, motion=name)
            dirs.append(str(tmp_path / name))
        cfg = write_json(
            tmp_path / "svm.json", {"schema_version": 1, "gamma": 1.0, "windows_per_trial": 60}
        )
        result = runner.invoke(
            main, ["train-svm", "--trials", ",".join(dirs),
                   "--out", str(tmp_path / "m.json"), "--config", cfg]
        )
        assert result.exit_code == 0, result.output
        result = runner.invoke(
            main, ["classify", "--trial", dirs[0], "--model", str(tmp_path / "m.json"),
                   "--out", str(tmp_path / "motions.csv")]
        )
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "motions.csv").read_text().splitlines()
        assert lines[0] == "t,motion"
        trial = io.load_trial(dirs[0])
        assert len(lines) == len(trial.imu) + 1
        assert all(line.split(",")[1] in ("walk", "run", "stair") for line in lines[1:])

    def test_classify_lstm_flags(self, runner, tmp_path):
        trial = simulate(GaitProfile.walk(noise_accel=0.02, noise_gyro=0.002, seed=4), 20.0)
        io.save_trial(tmp_path / "walk", trial)
        cfg = write_json(
            tmp_path / "train.json",
            {"schema_version": 1, "epochs": 2, "windows_per_trial": 40,
             "num_layers": 1, "hidden_size": 4, "batch_size": 32},
        )
        result = runner.invoke(
            main, ["train-lstm", "--trials", str(tmp_path / "walk"),
                   "--out", str(tmp_path / "lstm.json"), "--config", cfg]
        )
        assert result.exit_code == 0, result.output
        result = runner.invoke(
            main, ["classify-lstm", "--trial", str(tmp_path / "walk"),
                   "--model", str(tmp_path / "lstm.json"),
                   "--out", str(tmp_path / "zv.csv")]
        )
        assert result.exit_code == 0, result.output
        t, zv = io.read_labels_csv(tmp_path / "zv.csv")
        assert t.shape[0] == len(trial.imu)
        assert set(np.unique(zv)) <= {0, 1}


class TestRetarget:
    def test_round_trip(self, runner, tmp_path):
        trial = simulate(GaitProfile.walk(), 10.0)
        io.write_imu_csv(tmp_path / "imu.csv", trial.imu)
        spec = write_json(
            tmp_path / "spec.json",
            {"schema_version": 1, "source_rate": 200.0, "target_rate": 125.0,
             "cutoff": 40.0, "sigma_accel": 0.01, "sigma_gyro": 0.00174, "seed": 0},
        )
        result = runner.invoke(
            main, ["retarget", "--in", str(tmp_path / "imu.csv"), "--spec", spec,
                   "--out", str(tmp_path / "imu125.csv")]
        )
        assert result.exit_code == 0, result.output
        out = io.read_imu_csv(tmp_path / "imu125.csv")
        assert out.nominal_rate == pytest.approx(125.0)
        assert len(out) == 1250
