"""Shared fixtures: simulated trials and trained models reused across tests.

The expensive fixtures (LSTM training in particular) are session-scoped; a
full run builds them once. Architecture for the trained models is reduced
relative to the production defaults to fit the test budget; the learning
task is unchanged.
"""

import numpy as np
import pytest

from zvnav.augment import RetargetSpec, retarget
from zvnav.core import TimedPositions
from zvnav.gait_sim import GaitProfile, simulate, simulate_sequence
from zvnav.lstm import TrainConfig, extract_training_windows, train
from zvnav.motion_adaptive import extract_motion_windows, train_svm
from zvnav.threshold_opt import TrialRecord

SIM_NOISE = dict(noise_accel=0.02, noise_gyro=0.002)

# reduced-size training architecture used throughout the test suite
LSTM_TEST_LAYERS = 2
LSTM_TEST_HIDDEN = 16
LSTM_TEST_LR = 3e-3
SVM_TEST_GAMMA = 0.7


def f1_score(pred, truth):
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    tp = np.sum(pred & truth)
    fp = np.sum(pred & ~truth)
    fn = np.sum(~pred & truth)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


@pytest.fixture(scope="session")
def motion_trials():
    """One noisy trial per motion class, long enough for window extraction."""
    return {
        "walk": simulate(GaitProfile.walk(seed=1, **SIM_NOISE), 60.0),
        "run": simulate(GaitProfile.run(seed=2, **SIM_NOISE), 45.0),
        "stair": simulate(GaitProfile.stair_up(seed=3, **SIM_NOISE), 60.0),
    }


@pytest.fixture(scope="session")
def mixed_walk_run_trial():
    return simulate_sequence(
        [
            (GaitProfile.walk(seed=21, **SIM_NOISE), 25.0),
            (GaitProfile.run(seed=22, **SIM_NOISE), 20.0),
        ]
    )


@pytest.fixture(scope="session")
def stair_updown_trial():
    """Four flights up (48 steps of 0.171 m) and back down, retracing.

    The duration fits exactly 96 strides (1 s lead-in dwell + 96 x 1.5 s).
    """
    return simulate(
        GaitProfile.stair_up(seed=31, route="out_and_back", **SIM_NOISE), 146.0
    )


@pytest.fixture(scope="session")
def trained_svm(motion_trials):
    """Motion classifier with orientation-dense rotation augmentation."""
    rng = np.random.default_rng(0)
    windows, labels = [], []
    for trial in motion_trials.values():
        w, l = extract_motion_windows(
            trial, 300, rng=rng, rotate=True, rotations_per_window=8
        )
        windows += w
        labels += l
    return train_svm(windows, labels, gamma=SVM_TEST_GAMMA, C=1.0, seed=0)


@pytest.fixture(scope="session")
def svm_validation_windows(motion_trials):
    rng = np.random.default_rng(99)
    windows, labels = [], []
    for trial in motion_trials.values():
        w, l = extract_motion_windows(trial, 80, rng=rng, rotate=True)
        windows += w
        labels += l
    return windows, labels


@pytest.fixture(scope="session")
def lstm_train_config():
    return TrainConfig(epochs=300, learning_rate=LSTM_TEST_LR, seed=0)


@pytest.fixture(scope="session")
def trained_lstm(motion_trials, lstm_train_config):
    """Zero-velocity classifier trained on 200 windows per motion, 300 epochs."""
    rng = np.random.default_rng(0)
    dataset = []
    for trial in motion_trials.values():
        dataset += extract_training_windows(trial, 200, rng=rng)
    return train(
        dataset,
        lstm_train_config,
        num_layers=LSTM_TEST_LAYERS,
        hidden_size=LSTM_TEST_HIDDEN,
    )


@pytest.fixture(scope="session")
def lstm_heldout_windows(motion_trials):
    rng = np.random.default_rng(77)
    dataset = []
    for trial in motion_trials.values():
        dataset += extract_training_windows(trial, 100, rng=rng)
    return dataset


def retarget_trial(trial, spec: RetargetSpec) -> TrialRecord:
    """Retarget a trial's IMU log and resample its ground truth to match."""
    imu = retarget(trial.imu, spec)
    gt_positions = None
    if trial.gt_positions is not None:
        xyz = np.empty((len(imu), 3))
        for axis in range(3):
            xyz[:, axis] = np.interp(imu.t, trial.gt_positions.t, trial.gt_positions.xyz[:, axis])
        gt_positions = TimedPositions(imu.t, xyz)
    gt_zv = None
    if trial.gt_zv is not None:
        idx = np.clip(np.searchsorted(trial.imu.t, imu.t, side="right") - 1, 0, None)
        gt_zv = trial.gt_zv[idx]
    return TrialRecord(
        imu=imu, gt_positions=gt_positions, gt_zv=gt_zv, motion_label=trial.motion_label
    )


@pytest.fixture(scope="session")
def retarget_spec():
    return RetargetSpec(source_rate=200.0, target_rate=125.0, cutoff=40.0,
                        sigma_accel=1e-2, sigma_gyro=1.74e-3, seed=5)


@pytest.fixture(scope="session")
def retrained_lstm(motion_trials, retarget_spec, lstm_train_config):
    """Same training procedure, run on the retargeted training data."""
    rng = np.random.default_rng(0)
    dataset = []
    for trial in motion_trials.values():
        dataset += extract_training_windows(retarget_trial(trial, retarget_spec), 200, rng=rng)
    return train(
        dataset,
        lstm_train_config,
        num_layers=LSTM_TEST_LAYERS,
        hidden_size=LSTM_TEST_HIDDEN,
    )
