"""Recurrent zero-velocity classifier: stacked LSTM trained from scratch.

The network consumes windows of 100 raw IMU steps (6 channels) and predicts
whether the sensor is stationary at the window's final step. Forward pass,
backpropagation through time, and the Adam optimizer are implemented here in
double precision; only the sequential cell recurrences are delegated to the
kernel backend. A softmax head yields (p_zero, p_move); at inference a
positive call additionally requires p_zero to clear a confidence gate.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .core import ImuSequence
from .errors import TrainingDivergedError, ZvnavError

WINDOW_STEPS = 100
INPUT_SIZE = 6
NUM_CLASSES = 2  # index 0 = stationary, index 1 = moving
DEFAULT_LAYERS = 6
DEFAULT_HIDDEN = 80


@dataclass(frozen=True)
class TrainSample:
    """One training window: x is (100, 6); y = 1 if stationary at the last step."""

    x: np.ndarray
    y: int

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.shape != (WINDOW_STEPS, INPUT_SIZE):
            raise ZvnavError(f"x must be ({WINDOW_STEPS}, {INPUT_SIZE}), got {x.shape}")
        if self.y not in (0, 1):
            raise ZvnavError(f"y must be 0 or 1, got {self.y}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 256
    gate: float = 0.85
    seed: int = 0
    augment_rotation: bool = True
    augment_scaling: bool = True
    max_rotation_deg: float = 10.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    val_fraction: float = 0.1

    def __post_init__(self):
        if not (0.5 < self.gate < 1.0):
            raise ZvnavError(f"gate must lie in (0.5, 1), got {self.gate}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ZvnavError("invalid training configuration")


class LstmModel:
    """Stacked LSTM with a 2-way softmax head.

    Parameters per layer: input weights (D, 4H), recurrent weights (H, 4H),
    bias (4H,), gate blocks ordered (input, forget, cell, output). Hidden and
    cell states start at zero for every window.
    """

    def __init__(self, layers, fc_w, fc_b, metadata=None):
        self.layers = [
            (np.ascontiguousarray(wx, dtype=float),
             np.ascontiguousarray(wh, dtype=float),
             np.ascontiguousarray(b, dtype=float))
            for wx, wh, b in layers
        ]
        self.fc_w = np.ascontiguousarray(fc_w, dtype=float)
        self.fc_b = np.ascontiguousarray(fc_b, dtype=float)
        self.metadata = dict(metadata or {})
        self._validate()

    def _validate(self):
        if not self.layers:
            raise ZvnavError("model needs at least one LSTM layer")
        hidden = self.layers[0][1].shape[0]
        expected_in = INPUT_SIZE
        for i, (wx, wh, b) in enumerate(self.layers):
            if wx.shape != (expected_in, 4 * hidden):
                raise ZvnavError(f"layer {i}: Wx shape {wx.shape} != ({expected_in}, {4 * hidden})")
            if wh.shape != (hidden, 4 * hidden) or b.shape != (4 * hidden,):
                raise ZvnavError(f"layer {i}: inconsistent recurrent shapes")
            expected_in = hidden
        if self.fc_w.shape != (hidden, NUM_CLASSES) or self.fc_b.shape != (NUM_CLASSES,):
            raise ZvnavError("head shapes inconsistent with hidden size")
        for arr in self.parameters().values():
            if not np.all(np.isfinite(arr)):
                raise ZvnavError("model parameters contain non-finite values")

    @property
    def hidden_size(self) -> int:
        return self.layers[0][1].shape[0]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> dict:
        params = {}
        for i, (wx, wh, b) in enumerate(self.layers):
            params[f"layer{i}.wx"] = wx
            params[f"layer{i}.wh"] = wh
            params[f"layer{i}.b"] = b
        params["fc.w"] = self.fc_w
        params["fc.b"] = self.fc_b
        return params

    def copy(self) -> "LstmModel":
        return LstmModel(
            [(wx.copy(), wh.copy(), b.copy()) for wx, wh, b in self.layers],
            self.fc_w.copy(),
            self.fc_b.copy(),
            dict(self.metadata),
        )

    @classmethod
    def initialize(
        cls,
        num_layers: int = DEFAULT_LAYERS,
        hidden_size: int = DEFAULT_HIDDEN,
        seed: int = 0,
    ) -> "LstmModel":
        """Uniform(-1/sqrt(H), 1/sqrt(H)) initialization, seeded."""
        rng = np.random.default_rng(seed)
        k = 1.0 / np.sqrt(hidden_size)
        layers = []
        d = INPUT_SIZE
        for _ in range(num_layers):
            wx = rng.uniform(-k, k, size=(d, 4 * hidden_size))
            wh = rng.uniform(-k, k, size=(hidden_size, 4 * hidden_size))
            b = rng.uniform(-k, k, size=4 * hidden_size)
            layers.append((wx, wh, b))
            d = hidden_size
        fc_w = rng.uniform(-k, k, size=(hidden_size, NUM_CLASSES))
        fc_b = np.zeros(NUM_CLASSES)
        return cls(layers, fc_w, fc_b, metadata={"init_seed": seed})

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "lstm-zv",
            "num_layers": self.num_layers,
            "hidden_size": self.hidden_size,
            "input_size": INPUT_SIZE,
            "metadata": self.metadata,
            "layers": [
                {"wx": wx.reshape(-1).tolist(), "wh": wh.reshape(-1).tolist(), "b": b.tolist()}
                for wx, wh, b in self.layers
            ],
            "fc_w": self.fc_w.reshape(-1).tolist(),
            "fc_b": self.fc_b.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LstmModel":
        if obj.get("kind") != "lstm-zv":
            raise ZvnavError(f"not an LSTM model file (kind={obj.get('kind')!r})")
        h = int(obj["hidden_size"])
        layers = []
        d = int(obj["input_size"])
        for layer in obj["layers"]:
            wx = np.asarray(layer["wx"], dtype=float).reshape(d, 4 * h)
            wh = np.asarray(layer["wh"], dtype=float).reshape(h, 4 * h)
            b = np.asarray(layer["b"], dtype=float)
            layers.append((wx, wh, b))
            d = h
        return cls(
            layers,
            np.asarray(obj["fc_w"], dtype=float).reshape(h, NUM_CLASSES),
            np.asarray(obj["fc_b"], dtype=float),
            obj.get("metadata", {}),
        )

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "LstmModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _forward_batch(model: LstmModel, X: np.ndarray, keep_cache: bool):
    """Stacked forward pass; returns (probs, cache). X is (B, T, 6)."""
    B, T, _ = X.shape
    inp = X
    cache = [] if keep_cache else None
    for wx, wh, b in model.layers:
        xp = inp.reshape(B * T, -1) @ wx + b
        h, c, gates, tc = _kernels.lstm_seq_forward(
            np.ascontiguousarray(xp.reshape(B, T, -1)), wh
        )
        if keep_cache:
            cache.append((inp, h, c, gates, tc))
        inp = h
    h_last = inp[:, -1, :]
    logits = h_last @ model.fc_w + model.fc_b
    if not np.all(np.isfinite(logits)):
        raise ZvnavError("non-finite activations in forward pass")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    return probs, (cache, h_last)


def lstm_forward(model: LstmModel, x: np.ndarray) -> tuple[float, float]:
    """Probabilities (p_zero, p_move) for one window of 100 IMU steps."""
    x = np.asarray(x, dtype=float)
    if x.shape != (WINDOW_STEPS, INPUT_SIZE):
        raise ZvnavError(f"x must be ({WINDOW_STEPS}, {INPUT_SIZE}), got {x.shape}")
    probs, _ = _forward_batch(model, x[None], keep_cache=False)
    return float(probs[0, 0]), float(probs[0, 1])


def forward_probabilities(model: LstmModel, X: np.ndarray) -> np.ndarray:
    """Batched (B, 2) softmax probabilities; columns (p_zero, p_move)."""
    probs, _ = _forward_batch(model, np.asarray(X, dtype=float), keep_cache=False)
    return probs


def loss(y, p_zero) -> float:
    """Mean binary cross-entropy between labels and stationary probabilities.

    Probabilities exactly at 0 or 1 that disagree with the label are clamped
    to 1e-12 with a warning instead of producing infinities.
    """
    y = np.asarray(y, dtype=float)
    p = np.asarray(p_zero, dtype=float)
    if y.shape != p.shape:
        raise ZvnavError("labels and probabilities must have equal shape")
    if np.any((p < 0) | (p > 1)):
        raise ZvnavError("probabilities must lie in [0, 1]")
    mismatch = ((p == 0.0) & (y == 1.0)) | ((p == 1.0) & (y == 0.0))
    if np.any(mismatch):
        warnings.warn("saturated probability with mismatched label; clamping", stacklevel=2)
    # clamp each log argument from below only, so a saturated probability that
    # agrees with its label still contributes an exact zero
    log_p = np.log(np.clip(p, 1e-12, None))
    log_q = np.log(np.clip(1.0 - p, 1e-12, None))
    return float(-np.mean(y * log_p + (1.0 - y) * log_q))


def gradient(model: LstmModel, X: np.ndarray, y: np.ndarray) -> dict:
    """Mean cross-entropy gradients for every parameter via full BPTT."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ZvnavError("batch must be a non-empty (B, T, 6) array")
    B, T, _ = X.shape
    probs, (cache, h_last) = _forward_batch(model, X, keep_cache=True)

    target = np.zeros_like(probs)
    target[:, 0] = y
    target[:, 1] = 1.0 - y
    dlogits = (probs - target) / B

    grads = {
        "fc.w": h_last.T @ dlogits,
        "fc.b": dlogits.sum(axis=0),
    }
    dh_top = dlogits @ model.fc_w.T

    dh_out = None
    for li in range(len(model.layers) - 1, -1, -1):
        wx, wh, _ = model.layers[li]
        inp, h, c, gates, tc = cache[li]
        if dh_out is None:
            dh_out = np.zeros_like(h)
            dh_out[:, -1, :] = dh_top
        dgates = _kernels.lstm_seq_backward(dh_out, c, gates, tc, wh)
        flat_g = dgates.reshape(B * T, -1)
        h_prev = np.zeros_like(h)
        h_prev[:, 1:, :] = h[:, :-1, :]
        grads[f"layer{li}.wx"] = inp.reshape(B * T, -1).T @ flat_g
        grads[f"layer{li}.wh"] = h_prev.reshape(B * T, -1).T @ flat_g
        grads[f"layer{li}.b"] = flat_g.sum(axis=0)
        if li > 0:
            dh_out = (flat_g @ wx.T).reshape(B, T, -1)

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ZvnavError(f"non-finite gradient for parameter {name}")
    return grads


def _augment_batch(X, cfg: TrainConfig, rng) -> np.ndarray:
    """Per-sample random rotation and scaling of the raw IMU channels."""
    from .core import quat_from_axis_angle, quat_to_rotmat

    out = X.copy()
    B = X.shape[0]
    if cfg.augment_rotation:
        max_angle = np.deg2rad(cfg.max_rotation_deg)
        for i in range(B):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(0.0, max_angle)
            R = quat_to_rotmat(quat_from_axis_angle(axis * angle))
            out[i, :, 0:3] = out[i, :, 0:3] @ R.T
            out[i, :, 3:6] = out[i, :, 3:6] @ R.T
    if cfg.augment_scaling:
        scales = rng.uniform(cfg.scale_range[0], cfg.scale_range[1], size=B)
        out *= scales[:, None, None]
    return out


def train(
    dataset,
    cfg: TrainConfig | None = None,
    val_dataset=None,
    num_layers: int = DEFAULT_LAYERS,
    hidden_size: int = DEFAULT_HIDDEN,
) -> LstmModel:
    """Train a zero-velocity classifier with Adam; returns the best-validation model.

    Both classes must be present. When ``val_dataset`` is None a seeded
    ``cfg.val_fraction`` split is held out. Per-epoch shuffling, augmentation
    draws, and initialization all flow from ``cfg.seed``, so repeated runs are
    bit-identical. Raises TrainingDivergedError if the loss goes non-finite.
    """
    if cfg is None:
        cfg = TrainConfig()
    X = np.stack([s.x for s in dataset]).astype(float)
    y = np.array([s.y for s in dataset], dtype=float)
    if len(set(y.tolist())) < 2:
        raise ZvnavError("training data must contain both classes")

    rng = np.random.default_rng(cfg.seed)
    if val_dataset is None:
        perm = rng.permutation(X.shape[0])
        n_val = max(1, int(round(cfg.val_fraction * X.shape[0])))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        X_val, y_val = X[val_idx], y[val_idx]
        X, y = X[train_idx], y[train_idx]
    else:
        X_val = np.stack([s.x for s in val_dataset]).astype(float)
        y_val = np.array([s.y for s in val_dataset], dtype=float)

    model = LstmModel.initialize(num_layers, hidden_size, seed=cfg.seed)
    params = model.parameters()
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    best_val = np.inf
    best = model.copy()
    train_history, val_history = [], []

    for epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, X.shape[0], cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = X[idx]
            if cfg.augment_rotation or cfg.augment_scaling:
                xb = _augment_batch(xb, cfg, rng)
            yb = y[idx]
            probs, _ = _forward_batch(model, xb, keep_cache=False)
            batch_loss = loss(yb, probs[:, 0])
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}, batch {n_batches}"
                )
            grads = gradient(model, xb, yb)
            step += 1
            for name, p in params.items():
                g = grads[name]
                adam_m[name] = beta1 * adam_m[name] + (1 - beta1) * g
                adam_v[name] = beta2 * adam_v[name] + (1 - beta2) * (g * g)
                m_hat = adam_m[name] / (1 - beta1**step)
                v_hat = adam_v[name] / (1 - beta2**step)
                p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
            epoch_loss += batch_loss
            n_batches += 1
        train_history.append(epoch_loss / max(n_batches, 1))

        val_probs, _ = _forward_batch(model, X_val, keep_cache=False)
        val_loss = loss(y_val, val_probs[:, 0])
        val_history.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best = model.copy()

    best.metadata.update(
        {
            "seed": cfg.seed,
            "epochs": cfg.epochs,
            "best_val_loss": float(best_val),
            "train_loss_history": [float(v) for v in train_history],
            "val_loss_history": [float(v) for v in val_history],
        }
    )
    return best


def classify(model: LstmModel, seq: ImuSequence, gate: float = 0.85, chunk: int = 2048) -> np.ndarray:
    """Per-step stationary flags for a whole sequence.

    The window ending at step k (k >= window-1) is classified; a step is
    flagged stationary only when the stationary class wins the argmax AND its
    probability clears the confidence gate. The first window-1 steps are 0.
    """
    n = len(seq)
    if n < WINDOW_STEPS:
        raise ZvnavError(f"sequence of {n} samples shorter than {WINDOW_STEPS}")
    raw = np.column_stack([seq.accel, seq.gyro]).astype(float)
    from numpy.lib.stride_tricks import sliding_window_view

    windows = sliding_window_view(raw, WINDOW_STEPS, axis=0)  # (n-99, 6, 100)
    flags = np.zeros(n, dtype=np.uint8)
    m = windows.shape[0]
    for start in range(0, m, chunk):
        block = np.ascontiguousarray(
            windows[start : start + chunk].transpose(0, 2, 1)
        )
        probs, _ = _forward_batch(model, block, keep_cache=False)
        p_zero = probs[:, 0]
        flags[WINDOW_STEPS - 1 + start : WINDOW_STEPS - 1 + start + block.shape[0]] = (
            p_zero >= max(gate, 0.5)
        )
    return flags


def extract_training_windows(trial, count: int, rng=None):
    """Sample labelled training windows from a trial (label = zv at window end)."""
    if trial.gt_zv is None:
        raise ZvnavError("trial has no zero-velocity labels")
    if rng is None:
        rng = np.random.default_rng(0)
    n = len(trial.imu)
    if n < WINDOW_STEPS:
        raise ZvnavError("trial too short for a training window")
    raw = np.column_stack([trial.imu.accel, trial.imu.gyro]).astype(float)
    ends = rng.integers(WINDOW_STEPS - 1, n, size=count)
    samples = []
    for e in ends:
        e = int(e)
        samples.append(TrainSample(raw[e - WINDOW_STEPS + 1 : e + 1], int(trial.gt_zv[e])))
    return samples
