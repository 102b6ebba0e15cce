"""Zero-velocity-aided foot-mounted inertial navigation toolkit.

An error-state Kalman filter over IMU logs with pluggable zero-velocity
detectors (classical fixed-threshold, SVM motion-adaptive, LSTM-based), plus
supporting pipelines for label generation, data augmentation, IMU
retargeting, gait simulation, and trajectory evaluation.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .core import ImuSample, ImuSequence, NavState, Quaternion, TimedPositions
from .detectors import AredParams, DetectorDecision, ShoeParams
from .eskf import ErrorCovariance, FilterConfig, Trajectory, run_filter
from .threshold_opt import LabelResult, TrialRecord, label_trial, optimize_threshold

__version__ = "0.1.0"

__all__ = [
    "AredParams",
    "DetectorDecision",
    "ErrorCovariance",
    "FilterConfig",
    "ImuSample",
    "ImuSequence",
    "KERNEL_BACKEND",
    "LabelResult",
    "NavState",
    "Quaternion",
    "ShoeParams",
    "TimedPositions",
    "Trajectory",
    "TrialRecord",
    "label_trial",
    "optimize_threshold",
    "run_filter",
    "__version__",
]
