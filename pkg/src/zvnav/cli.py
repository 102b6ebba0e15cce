"""Command-line pipeline: simulate -> label -> train -> estimate -> evaluate.

All JSON configs are versioned (``schema_version``) and fail closed: unknown
fields are rejected so a config always means what it says. Every source of
randomness is an explicit seed. Exit codes: 2 for malformed inputs (with a
line-numbered message where applicable), 3 for numerical divergence.
"""

from __future__ import annotations

import dataclasses
import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import io
from .augment import RetargetSpec, retarget as retarget_seq
from .detectors import AredParams, ShoeParams, detect_sequence
from .errors import (
    DataFormatError,
    FilterDivergenceError,
    TrainingDivergedError,
    ZvnavError,
)
from .eskf import FilterConfig, run_filter
from .gait_sim import GaitProfile, simulate as simulate_profile
from .lstm import (
    LstmModel,
    TrainConfig,
    classify as lstm_classify,
    extract_training_windows,
    train as lstm_train,
)
from .metrics import armse, furthest_point_vertical, loop_closure
from .motion_adaptive import (
    SvmModel,
    ThresholdTable,
    adaptive_detect,
    extract_motion_windows,
    train_svm,
)
from .threshold_opt import label_trial

EXIT_BAD_INPUT = 2
EXIT_DIVERGED = 3


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (FilterDivergenceError, TrainingDivergedError) as exc:
            _fail(str(exc), EXIT_DIVERGED)
        except (DataFormatError, ZvnavError) as exc:
            _fail(str(exc), EXIT_BAD_INPUT)

    return wrapper


def _check_fields(obj: dict, allowed, context: str) -> None:
    if not isinstance(obj, dict):
        raise DataFormatError(f"{context} must be a JSON object")
    unknown = sorted(set(obj) - set(allowed) - {"schema_version"})
    if unknown:
        raise DataFormatError(f"unknown fields {unknown} in {context}")


def _load_config(path, context: str) -> dict:
    obj = io.read_json(path)
    if obj.get("schema_version") != 1:
        raise DataFormatError(
            f"{context} must declare schema_version 1, got {obj.get('schema_version')!r}",
            path=path,
        )
    return obj


def _build(cls, obj: dict, context: str, **extra):
    names = [f.name for f in dataclasses.fields(cls)]
    _check_fields(obj, names, context)
    kwargs = {k: v for k, v in obj.items() if k != "schema_version"}
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise DataFormatError(f"{context}: {exc}")


def _filter_config(cfg_obj: dict | None) -> FilterConfig:
    if not cfg_obj:
        return FilterConfig()
    obj = dict(cfg_obj)
    if "init_std" in obj:
        obj["init_std"] = tuple(obj["init_std"])
    return _build(FilterConfig, obj, "filter config")


def _detector_params(cfg: dict, kind: str):
    obj = cfg.get(kind)
    if obj is None:
        return ShoeParams() if kind == "shoe" else AredParams()
    cls = ShoeParams if kind == "shoe" else AredParams
    return _build(cls, obj, f"{kind} params")


@click.group()
def main():
    """Zero-velocity-aided inertial navigation toolkit."""


@main.command()
@click.option("--profile", "profile_path", required=True, type=click.Path(exists=True))
@click.option("--duration", required=True, type=float)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_handle_errors
def simulate(profile_path, duration, out_dir):
    """Generate a synthetic trial (IMU + ground truth) from a profile JSON."""
    obj = _load_config(profile_path, "gait profile")
    profile = _build(GaitProfile, obj, "gait profile")
    trial = simulate_profile(profile, duration)
    io.save_trial(out_dir, trial, motion=trial.motion_label)
    click.echo(f"wrote trial ({len(trial.imu)} samples) to {out_dir}")


@main.command()
@click.option("--trial", "trial_dir", required=True, type=click.Path(exists=True))
@click.option("--detectors", default="shoe,ared,speed", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@_handle_errors
def label(trial_dir, detectors, out_dir, config_path):
    """Optimize detector thresholds and write best-detector zero-velocity labels."""
    cfg_obj = _load_config(config_path, "label config") if config_path else {}
    _check_fields(cfg_obj, ("filter", "shoe", "ared"), "label config")
    filter_cfg = _filter_config(cfg_obj.get("filter"))
    params = {k: _detector_params(cfg_obj, k) for k in ("shoe", "ared")}

    trial = io.load_trial(trial_dir)
    kinds = tuple(k.strip() for k in detectors.split(",") if k.strip())
    result = label_trial(trial, detectors=kinds, cfg=filter_cfg, params=params)

    out = Path(out_dir)
    io.write_labels_csv(out / "labels.csv", trial.imu.t, result.labels)
    io.write_json(
        out / "label_report.json",
        {
            "schema_version": 1,
            "winner": result.winning_detector,
            "threshold": result.threshold,
            "armse_m": result.armse,
            "per_detector": result.per_detector,
        },
    )
    click.echo(
        f"winner: {result.winning_detector} (threshold {result.threshold:.4g}, "
        f"ARMSE {result.armse:.3f} m)"
    )


def _trial_dirs(trials: str) -> list[Path]:
    dirs = [Path(p.strip()) for p in trials.split(",") if p.strip()]
    if not dirs:
        raise DataFormatError("no trial directories given")
    return dirs


@main.command("train-svm")
@click.option("--trials", required=True, help="comma-separated trial directories")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@_handle_errors
def train_svm_cmd(trials, out_path, config_path):
    """Train the motion classifier from labelled trials."""
    cfg = _load_config(config_path, "svm config") if config_path else {}
    _check_fields(
        cfg, ("gamma", "C", "tol", "seed", "windows_per_trial", "rotate"), "svm config"
    )
    seed = int(cfg.get("seed", 0))
    per_trial = int(cfg.get("windows_per_trial", 2000))
    rng = np.random.default_rng(seed)
    windows, labels = [], []
    for d in _trial_dirs(trials):
        trial = io.load_trial(d)
        w, l = extract_motion_windows(
            trial, per_trial, rng=rng, rotate=bool(cfg.get("rotate", True))
        )
        windows.extend(w)
        labels.extend(l)
    model = train_svm(
        windows,
        labels,
        gamma=float(cfg.get("gamma", 0.001)),
        C=float(cfg.get("C", 1.0)),
        tol=float(cfg.get("tol", 1e-3)),
        seed=seed,
    )
    model.save(out_path)
    click.echo(f"trained on {len(windows)} windows ({sorted(set(labels))}); wrote {out_path}")


@main.command("train-lstm")
@click.option("--trials", required=True, help="comma-separated trial directories")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@_handle_errors
def train_lstm_cmd(trials, out_path, config_path):
    """Train the zero-velocity classifier from labelled trials."""
    cfg = _load_config(config_path, "lstm config") if config_path else {}
    extra = ("windows_per_trial", "num_layers", "hidden_size")
    train_fields = [f.name for f in dataclasses.fields(TrainConfig)]
    _check_fields(cfg, train_fields + list(extra), "lstm config")
    tc_obj = {k: v for k, v in cfg.items() if k in train_fields}
    if "scale_range" in tc_obj:
        tc_obj["scale_range"] = tuple(tc_obj["scale_range"])
    tc = _build(TrainConfig, tc_obj, "lstm config")
    per_trial = int(cfg.get("windows_per_trial", 7000))

    rng = np.random.default_rng(tc.seed)
    samples = []
    for d in _trial_dirs(trials):
        trial = io.load_trial(d)
        samples.extend(extract_training_windows(trial, per_trial, rng=rng))
    model = lstm_train(
        samples,
        tc,
        num_layers=int(cfg.get("num_layers", 6)),
        hidden_size=int(cfg.get("hidden_size", 80)),
    )
    model.save(out_path)
    click.echo(
        f"trained on {len(samples)} windows; best val loss "
        f"{model.metadata['best_val_loss']:.4f}; wrote {out_path}"
    )


@main.command()
@click.option("--trial", "trial_dir", required=True, type=click.Path(exists=True))
@click.option(
    "--detector",
    required=True,
    type=click.Choice(["shoe", "ared", "adaptive", "lstm"]),
)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--trace", "trace_path", type=click.Path(),
              help="also write the detector statistic trace (t,statistic,flag)")
@_handle_errors
def estimate(trial_dir, detector, config_path, out_path, trace_path):
    """Run the filter end-to-end with the chosen detector; write the trajectory CSV."""
    cfg = _load_config(config_path, "estimate config") if config_path else {}
    _check_fields(cfg, ("filter", "shoe", "ared", "adaptive", "lstm", "seed"), "estimate config")
    if trace_path is not None and detector not in ("shoe", "ared"):
        raise DataFormatError("--trace is only available for the shoe/ared detectors")
    filter_cfg = _filter_config(cfg.get("filter"))
    trial = io.load_trial(trial_dir)

    statistic = None
    if detector in ("shoe", "ared"):
        params = _detector_params(cfg, detector)
        trace = detect_sequence(trial.imu, detector, params)
        statistic = trace.statistic
        flags = trace.stationary
    elif detector == "adaptive":
        obj = cfg.get("adaptive") or {}
        _check_fields(obj, ("model", "cadence", "table", "shoe"), "adaptive config")
        if "model" not in obj:
            raise DataFormatError("adaptive config needs a 'model' path")
        model = SvmModel.load(obj["model"])
        table_obj = obj.get("table") or {}
        table = _build(ThresholdTable, table_obj, "threshold table")
        shoe = (
            _build(ShoeParams, obj["shoe"], "shoe params") if "shoe" in obj else ShoeParams()
        )
        flags = adaptive_detect(
            trial.imu, model, table, shoe, cadence=int(obj.get("cadence", 50))
        ).stationary
    else:
        obj = cfg.get("lstm") or {}
        _check_fields(obj, ("model", "gate"), "lstm config")
        if "model" not in obj:
            raise DataFormatError("lstm config needs a 'model' path")
        model = LstmModel.load(obj["model"])
        flags = lstm_classify(model, trial.imu, gate=float(obj.get("gate", 0.85)))

    traj = run_filter(trial.imu, flags, filter_cfg)
    io.write_trajectory_csv(out_path, traj)
    if trace_path is not None and statistic is not None:
        io.write_trace_csv(trace_path, trial.imu.t, statistic, flags)
    click.echo(f"wrote trajectory ({len(traj)} rows) to {out_path}")


@main.command()
@click.option("--trial", "trial_dir", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--cadence", type=int, default=50, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@_handle_errors
def classify(trial_dir, model_path, cadence, out_path):
    """Classify the wearer's motion over a trial; write a per-step t,motion CSV."""
    trial = io.load_trial(trial_dir)
    model = SvmModel.load(model_path)
    result = adaptive_detect(
        trial.imu, model, ThresholdTable(), cadence=cadence
    )
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write("t,motion\n")
        for t, motion in zip(trial.imu.t, result.motions):
            fh.write(f"{t:.12g},{motion}\n")
    counts = {m: result.motions.count(m) for m in sorted(set(result.motions))}
    click.echo(f"wrote motion trace to {out} ({counts})")


@main.command("classify-lstm")
@click.option("--trial", "trial_dir", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--gate", type=float, default=0.85, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@_handle_errors
def classify_lstm_cmd(trial_dir, model_path, gate, out_path):
    """Classify zero-velocity events over a trial; write a t,zv labels CSV."""
    trial = io.load_trial(trial_dir)
    model = LstmModel.load(model_path)
    flags = lstm_classify(model, trial.imu, gate=gate)
    io.write_labels_csv(out_path, trial.imu.t, flags)
    click.echo(
        f"wrote {int(flags.sum())}/{flags.size} stationary flags to {out_path}"
    )


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_handle_errors
def retarget(in_path, spec_path, out_path):
    """Re-emit an IMU log as a lower-rate, noisier sensor would have seen it."""
    spec = _build(RetargetSpec, _load_config(spec_path, "retarget spec"), "retarget spec")
    seq = io.read_imu_csv(in_path)
    out = retarget_seq(seq, spec)
    io.write_imu_csv(out_path, out)
    click.echo(f"retargeted {len(seq)} samples at {seq.nominal_rate:.0f} Hz "
               f"to {len(out)} at {spec.target_rate:.0f} Hz")


@main.command()
@click.option("--traj", "traj_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--known-height", type=float, default=None)
@click.option("--t-furthest", type=float, default=None)
@_handle_errors
def evaluate(traj_path, gt_path, report_path, known_height, t_furthest):
    """Evaluate a trajectory against ground-truth positions; write a JSON report."""
    traj = io.read_trajectory_csv(traj_path)
    gt = io.read_positions_csv(gt_path)
    err_3d, err_vert = loop_closure(traj)
    report = {
        "schema_version": 1,
        "armse_m": armse(traj, gt),
        "loop_closure_3d_m": err_3d,
        "loop_closure_vertical_m": err_vert,
    }
    if known_height is not None and t_furthest is not None:
        report["furthest_point_vertical_m"] = furthest_point_vertical(
            traj, known_height, t_furthest
        )
    io.write_json(report_path, report)
    click.echo(
        f"ARMSE {report['armse_m']:.3f} m, loop closure {err_3d:.3f} m "
        f"(vertical {err_vert:.3f} m)"
    )


if __name__ == "__main__":
    main()
