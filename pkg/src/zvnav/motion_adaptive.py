"""Kernel-SVM motion classification driving motion-specific stance thresholds.

A window of raw IMU data is normalized (acceleration and angular-velocity
channel groups each scaled to unit norm) and classified as walk, run, or
stair by one-against-one RBF support vector machines trained with a
sequential-minimal-optimization solver. The predicted motion selects the
stance-detector threshold from a per-motion table, re-evaluated at a fixed
cadence over the sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ImuSequence
from .detectors import ShoeParams, detect_sequence
from .errors import ZvnavError

MOTION_CLASSES = ("walk", "run", "stair")
# vote ties resolve toward the low-threshold regime (walking-like motions)
_TIE_PRIORITY = {"walk": 0, "stair": 1, "run": 2}

WINDOW_STEPS = 200
FEATURE_SIZE = WINDOW_STEPS * 6


@dataclass(frozen=True)
class MotionWindow:
    """Normalized flat feature vector over a 200-step IMU window."""

    features: np.ndarray

    def __post_init__(self):
        f = np.ascontiguousarray(self.features, dtype=float)
        object.__setattr__(self, "features", f)
        if f.shape != (FEATURE_SIZE,):
            raise ZvnavError(f"features must have shape ({FEATURE_SIZE},), got {f.shape}")


def make_motion_window(seq: ImuSequence, k: int, rotate=None) -> MotionWindow:
    """Build the classifier feature vector for the window starting at sample k.

    Channels are concatenated time-major (ax, ay, az, wx, wy, wz per step).
    An optional rotation matrix is applied to every accel/gyro 3-vector
    before normalization. Each channel group is scaled to unit norm; an
    identically zero group is left as zeros.
    """
    if k < 0 or k + WINDOW_STEPS > len(seq):
        raise ZvnavError(
            f"window [{k}, {k + WINDOW_STEPS}) overruns sequence of length {len(seq)}"
        )
    accel = seq.accel[k : k + WINDOW_STEPS]
    gyro = seq.gyro[k : k + WINDOW_STEPS]
    if rotate is not None:
        R = np.asarray(rotate, dtype=float)
        accel = accel @ R.T
        gyro = gyro @ R.T
    a_norm = float(np.linalg.norm(accel))
    w_norm = float(np.linalg.norm(gyro))
    accel = accel / a_norm if a_norm > 1e-15 else accel
    gyro = gyro / w_norm if w_norm > 1e-15 else gyro
    feats = np.empty((WINDOW_STEPS, 6))
    feats[:, 0:3] = accel
    feats[:, 3:6] = gyro
    return MotionWindow(feats.reshape(-1))


def rbf_kernel(x, y, gamma: float) -> float:
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-gamma * (d @ d)))


def _rbf_matrix(X, Y, gamma):
    xx = (X * X).sum(axis=1)[:, None]
    yy = (Y * Y).sum(axis=1)[None, :]
    d2 = np.maximum(xx + yy - 2.0 * (X @ Y.T), 0.0)
    return np.exp(-gamma * d2)


@dataclass(frozen=True)
class BinarySvm:
    """One pairwise soft-margin machine: positive class first."""

    class_pos: str
    class_neg: str
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float
    gamma: float

    def decision(self, X: np.ndarray) -> np.ndarray:
        K = _rbf_matrix(np.atleast_2d(X), self.support_vectors, self.gamma)
        return K @ self.dual_coef + self.bias


@dataclass(frozen=True)
class SvmModel:
    """One-against-one multi-class SVM over the motion classes."""

    machines: tuple
    classes: tuple = MOTION_CLASSES
    gamma: float = 0.001

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "svm-rbf-ovo",
            "classes": list(self.classes),
            "gamma": self.gamma,
            "machines": [
                {
                    "class_pos": m.class_pos,
                    "class_neg": m.class_neg,
                    "bias": m.bias,
                    "n_support": int(m.support_vectors.shape[0]),
                    "feature_size": int(m.support_vectors.shape[1]),
                    "support_vectors": m.support_vectors.reshape(-1).tolist(),
                    "dual_coef": m.dual_coef.tolist(),
                }
                for m in self.machines
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SvmModel":
        if obj.get("kind") != "svm-rbf-ovo":
            raise ZvnavError(f"not an SVM model file (kind={obj.get('kind')!r})")
        machines = []
        for m in obj["machines"]:
            sv = np.asarray(m["support_vectors"], dtype=float).reshape(
                m["n_support"], m["feature_size"]
            )
            machines.append(
                BinarySvm(
                    class_pos=m["class_pos"],
                    class_neg=m["class_neg"],
                    support_vectors=sv,
                    dual_coef=np.asarray(m["dual_coef"], dtype=float),
                    bias=float(m["bias"]),
                    gamma=float(obj["gamma"]),
                )
            )
        return cls(machines=tuple(machines), classes=tuple(obj["classes"]), gamma=float(obj["gamma"]))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "SvmModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _smo_solve(K, y, C, tol, rng, max_iter=20000):
    """Sequential minimal optimization on a precomputed kernel matrix.

    ``y`` in {-1, +1}. Iterates until no sample violates the KKT conditions
    beyond ``tol``. Deterministic for a fixed rng state.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    b = 0.0
    # error cache: decision(x_i) - y_i
    E = -y.astype(float)

    def take_step(i, j):
        nonlocal b
        if i == j:
            return False
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            L, H = max(0.0, aj_old - ai_old), min(C, C + aj_old - ai_old)
        else:
            L, H = max(0.0, ai_old + aj_old - C), min(C, ai_old + aj_old)
        if H - L < 1e-12:
            return False
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta <= 1e-12:
            return False
        aj = aj_old + y[j] * (E[i] - E[j]) / eta
        aj = min(max(aj, L), H)
        if abs(aj - aj_old) < 1e-12 * (aj + aj_old + 1e-12):
            return False
        ai = ai_old + y[i] * y[j] * (aj_old - aj)
        b1 = b - E[i] - y[i] * (ai - ai_old) * K[i, i] - y[j] * (aj - aj_old) * K[i, j]
        b2 = b - E[j] - y[i] * (ai - ai_old) * K[i, j] - y[j] * (aj - aj_old) * K[j, j]
        if 0.0 < ai < C:
            b_new = b1
        elif 0.0 < aj < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        E[:] += (
            y[i] * (ai - ai_old) * K[:, i]
            + y[j] * (aj - aj_old) * K[:, j]
            + (b_new - b)
        )
        alpha[i], alpha[j] = ai, aj
        b = b_new
        return True

    def violates(i):
        r = E[i] * y[i]
        return (r < -tol and alpha[i] < C) or (r > tol and alpha[i] > 0)

    examine_all = True
    iterations = 0
    while iterations < max_iter:
        changed = 0
        if examine_all:
            candidates = range(n)
        else:
            candidates = np.flatnonzero((alpha > 0) & (alpha < C))
        for i in candidates:
            iterations += 1
            if not violates(i):
                continue
            # second-choice heuristic: largest |E_i - E_j| over non-bound points
            nb = np.flatnonzero((alpha > 0) & (alpha < C))
            stepped = False
            if nb.size > 1:
                j = int(nb[np.argmax(np.abs(E[i] - E[nb]))])
                stepped = take_step(i, j)
            if not stepped:
                start = int(rng.integers(n))
                for off in range(n):
                    if take_step(i, (start + off) % n):
                        stepped = True
                        break
            if stepped:
                changed += 1
        if changed == 0:
            if examine_all:
                break
            examine_all = True
        else:
            examine_all = False
    return alpha, b


def train_svm(
    windows,
    labels,
    gamma: float = 0.001,
    C: float = 1.0,
    tol: float = 1e-3,
    seed: int = 0,
) -> SvmModel:
    """Train one-against-one RBF machines for every motion class pair.

    Requires at least two classes with at least two samples each. Training is
    single-threaded and deterministic for a fixed seed.
    """
    X = np.stack([w.features for w in windows]).astype(float)
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ZvnavError("labels and windows must have equal length")
    present = [c for c in MOTION_CLASSES if labels.count(c) > 0]
    for lbl in labels:
        if lbl not in MOTION_CLASSES:
            raise ZvnavError(f"unknown motion label {lbl!r}; expected one of {MOTION_CLASSES}")
    if len(present) < 2:
        raise ZvnavError(f"need at least two motion classes, got {present}")
    for c in present:
        if labels.count(c) < 2:
            raise ZvnavError(f"class {c!r} has fewer than 2 samples")
    if gamma <= 0:
        raise ZvnavError("gamma must be positive")

    labels_arr = np.asarray(labels)
    machines = []
    rng = np.random.default_rng(seed)
    for ia in range(len(present)):
        for ib in range(ia + 1, len(present)):
            pos, neg = present[ia], present[ib]
            mask = (labels_arr == pos) | (labels_arr == neg)
            Xp = X[mask]
            yp = np.where(labels_arr[mask] == pos, 1.0, -1.0)
            K = _rbf_matrix(Xp, Xp, gamma)
            alpha, b = _smo_solve(K, yp, C, tol, rng)
            sv = alpha > 1e-10
            machines.append(
                BinarySvm(
                    class_pos=pos,
                    class_neg=neg,
                    support_vectors=Xp[sv],
                    dual_coef=alpha[sv] * yp[sv],
                    bias=b,
                    gamma=gamma,
                )
            )
    return SvmModel(machines=tuple(machines), classes=tuple(present), gamma=gamma)


def classify_motion(model: SvmModel, window: MotionWindow) -> str:
    """Majority vote over the pairwise machines; ties break walk > stair > run."""
    return classify_motion_batch(model, window.features[None, :])[0]


def classify_motion_batch(model: SvmModel, features: np.ndarray) -> list[str]:
    features = np.atleast_2d(features)
    votes = {c: np.zeros(features.shape[0], dtype=int) for c in model.classes}
    for m in model.machines:
        d = m.decision(features)
        votes[m.class_pos] += d >= 0
        votes[m.class_neg] += d < 0
    out = []
    for i in range(features.shape[0]):
        best = min(model.classes, key=lambda c: (-votes[c][i], _TIE_PRIORITY[c]))
        out.append(best)
    return out


@dataclass(frozen=True)
class ThresholdTable:
    """Per-motion stance-detector thresholds.

    The literal defaults mirror the walk/run/stair ratios of the adaptive
    detector's operating points (run 35x walk, stair = walk); absolute values
    are only meaningful for a fixed variance configuration, so re-derive them
    per setup with :meth:`from_walk` or threshold optimization.
    """

    walk: float = 1e7
    run: float = 3.5e8
    stair: float = 1e7

    def __post_init__(self):
        if self.walk <= 0 or self.run <= 0 or self.stair <= 0:
            raise ZvnavError("all thresholds must be positive")

    @classmethod
    def from_walk(cls, gamma_walk: float, run_ratio: float = 35.0, stair_ratio: float = 1.0):
        return cls(walk=gamma_walk, run=run_ratio * gamma_walk, stair=stair_ratio * gamma_walk)

    def for_motion(self, motion: str) -> float:
        if motion not in MOTION_CLASSES:
            raise ZvnavError(f"unknown motion {motion!r}")
        return getattr(self, motion)


@dataclass(frozen=True)
class AdaptiveResult:
    """Flags plus the per-step threshold/motion traces behind them."""

    stationary: np.ndarray
    thresholds: np.ndarray
    motions: list


def adaptive_detect(
    seq: ImuSequence,
    model: SvmModel,
    table: ThresholdTable,
    shoe_params: ShoeParams | None = None,
    cadence: int = 50,
) -> AdaptiveResult:
    """Stance detection with a motion-adaptive threshold.

    The motion class is re-evaluated every ``cadence`` samples on the
    trailing 200-step window and held in between; the first 200 samples use
    the walk threshold. The stance statistic itself is threshold-independent,
    so adapting the threshold only re-slices one statistic trace.
    """
    if shoe_params is None:
        shoe_params = ShoeParams()
    n = len(seq)
    if n < WINDOW_STEPS:
        raise ZvnavError(f"sequence of {n} samples shorter than {WINDOW_STEPS}")
    trace = detect_sequence(seq, "shoe", shoe_params)

    eval_points = list(range(WINDOW_STEPS, n, cadence))
    feats = np.stack(
        [make_motion_window(seq, k - WINDOW_STEPS).features for k in eval_points]
    )
    classes = classify_motion_batch(model, feats)

    thresholds = np.empty(n)
    motions: list = ["walk"] * n
    thresholds[: WINDOW_STEPS] = table.walk
    current_gamma = table.walk
    current_motion = "walk"
    prev = WINDOW_STEPS
    for k, motion in zip(eval_points, classes):
        thresholds[prev:k] = current_gamma
        for i in range(prev, k):
            motions[i] = current_motion
        current_motion = motion
        current_gamma = table.for_motion(motion)
        prev = k
    thresholds[prev:] = current_gamma
    for i in range(prev, n):
        motions[i] = current_motion

    flags = (trace.statistic < thresholds).astype(np.uint8)
    return AdaptiveResult(stationary=flags, thresholds=thresholds, motions=motions)


def random_rotation(rng) -> np.ndarray:
    """Uniformly distributed rotation matrix (via a uniform unit quaternion)."""
    from .core import Quaternion, quat_to_rotmat

    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    return quat_to_rotmat(Quaternion(*q))


def extract_motion_windows(
    trial, count: int, rng=None, rotate: bool = True, rotations_per_window: int = 1
):
    """Sample classifier training windows (optionally randomly rotated) from a trial.

    ``count`` window positions are drawn; with ``rotations_per_window`` > 1
    each position is emitted under several independent random orientations,
    which densifies orientation coverage and makes the trained classifier
    markedly more rotation-stable than the same budget of independent draws.
    Returns (windows, labels); the trial must carry a motion label.
    """
    if trial.motion_label is None:
        raise ZvnavError("trial has no motion label")
    if rng is None:
        rng = np.random.default_rng(0)
    if rotations_per_window < 1:
        raise ZvnavError("rotations_per_window must be >= 1")
    n = len(trial.imu)
    if n < WINDOW_STEPS:
        raise ZvnavError("trial too short for a motion window")
    repeats = rotations_per_window if rotate else 1
    starts = rng.integers(0, n - WINDOW_STEPS + 1, size=count)
    windows = []
    for k in starts:
        for _ in range(repeats):
            R = random_rotation(rng) if rotate else None
            windows.append(make_motion_window(trial.imu, int(k), rotate=R))
    return windows, [trial.motion_label] * len(windows)
