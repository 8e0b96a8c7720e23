"""Training loop, learning-rate schedule, cross-validation, and evaluation.

The default schedule holds the initial rate for 60 epochs, then runs
20-epoch cosine arcs whose peak halves every 40 epochs. Model selection
keeps the epoch with the best validation macro F1 of the base head.
Evaluation has two modes: "base" scores records from the convolutional
path alone (no per-record feature computation at all), "features"
additionally runs the quantitative branch and scores the joint head.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cam import cam_report, training_cam
from .engine import tensor as T
from .engine.checkpoint import load_checkpoint, save_checkpoint
from .engine.optim import Adam
from .engine.tensor import Tensor
from .errors import ConfigError, TrainingDivergedError
from .gtcam import GtCam, gt_cam_or_zero
from .hrv import (
    FeatureScaler,
    N_FEATURES,
    compute_features,
    detect_rpeaks,
    features_as_vector,
    fit_feature_scaler,
    rr_from_peaks,
)
from .errors import InsufficientBeatsError
from .losses import LossWeights, total_loss
from .metrics import EvalReport, evaluate_predictions, report_from_confusion
from .model import ExgNet, ModelConfig, pad_to_input_len
from .preprocess import PreprocessConfig, preprocess
from .records import ClassLabel, EcgRecord, label_index_map

Phase = tuple[str, int, float]


def paper_schedule(epochs: int = 200, lr_initial: float = 2e-4, warm_epochs: int = 60,
                   cosine_peak: float = 1e-4, phase_len: int = 20, halve_every: int = 40) -> tuple[Phase, ...]:
    """Constant warmup then cosine arcs with a peak that halves every halve_every epochs."""
    phases: list[Phase] = []
    if warm_epochs > 0:
        phases.append(("const", min(warm_epochs, epochs), lr_initial))
    covered = warm_epochs
    peak = cosine_peak
    since_halving = 0
    while covered < epochs:
        phases.append(("cosine", phase_len, peak))
        covered += phase_len
        since_halving += phase_len
        if since_halving >= halve_every:
            peak /= 2.0
            since_halving = 0
    return tuple(phases)


def constant_schedule(epochs: int, lr: float) -> tuple[Phase, ...]:
    return (("const", epochs, lr),)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; see the presets for sensible bundles."""

    batch_size: int = 4
    epochs: int = 200
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    schedule: tuple[Phase, ...] = field(default_factory=paper_schedule)
    preset: str = "paper"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")

    @classmethod
    def paper(cls, epochs: int = 200, seed: int = 0, weights: LossWeights | None = None) -> "TrainConfig":
        return cls(batch_size=4, epochs=epochs, seed=seed,
                   weights=weights if weights is not None else LossWeights(),
                   schedule=paper_schedule(epochs), preset="paper")

    @classmethod
    def desk(cls, epochs: int = 40, seed: int = 0, lr: float = 1e-3,
             batch_size: int = 16, weights: LossWeights | None = None) -> "TrainConfig":
        return cls(batch_size=batch_size, epochs=epochs, seed=seed,
                   weights=weights if weights is not None else LossWeights(),
                   schedule=constant_schedule(epochs, lr), preset="desk")


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """Learning rate for a 0-based epoch index."""
    if epoch < 0 or epoch >= config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    start = 0
    for kind, length, value in config.schedule:
        if epoch < start + length:
            t = epoch - start
            if kind == "const":
                return value
            if kind == "cosine":
                return value * (1.0 + math.cos(math.pi * t / length)) / 2.0
            raise ConfigError(f"unknown schedule phase kind {kind!r}")
        start += length
    # Past the declared phases: hold the last value's floor.
    kind, length, value = config.schedule[-1]
    return value if kind == "const" else 0.0


# -- dataset assembly -------------------------------------------------------


@dataclass
class PreparedData:
    """Model-ready arrays for a record set; optional parts stay None unless asked for."""

    ids: list[str]
    x: np.ndarray
    labels: np.ndarray
    features_raw: np.ndarray | None = None
    gt_masks: np.ndarray | None = None


def record_features(record: EcgRecord) -> np.ndarray:
    """Raw 17-feature vector; undetectable rhythms fall back to zeros."""
    try:
        peaks = detect_rpeaks(record.samples, record.sampling_rate)
        rr = rr_from_peaks(peaks, record.sampling_rate)
        return features_as_vector(compute_features(rr))
    except InsufficientBeatsError:
        return np.zeros(N_FEATURES)


def prepare_dataset(
    records: list[EcgRecord],
    model_config: ModelConfig,
    preprocess_config: PreprocessConfig | None = None,
    with_features: bool = False,
    with_masks: bool = False,
    label_map: dict[ClassLabel, int] | None = None,
) -> PreparedData:
    """Preprocess, pad, and stack a record list.

    Feature vectors and ground-truth masks both derive from peak detection
    on the raw (pre-normalization) signal, and are only computed on request
    so the base-only path never touches that machinery. Class indices come
    from label_map (default: declaration order over the full label set).
    """
    pcfg = preprocess_config if preprocess_config is not None else PreprocessConfig()
    lmap = label_map if label_map is not None else label_index_map("all")
    xs, labels = [], []
    feats = [] if with_features else None
    masks = [] if with_masks else None
    for rec in records:
        clean = preprocess(rec, pcfg)
        xs.append(pad_to_input_len(clean, model_config.input_len))
        labels.append(lmap[rec.label])
        if feats is not None:
            feats.append(record_features(rec))
        if masks is not None:
            masks.append(gt_cam_or_zero(rec, n_segments=model_config.n_segments).values)
    return PreparedData(
        ids=[rec.id for rec in records],
        x=np.stack(xs)[:, None, :],
        labels=np.asarray(labels, dtype=np.int64),
        features_raw=np.stack(feats) if feats is not None else None,
        gt_masks=np.stack(masks) if masks is not None else None,
    )


# -- training ----------------------------------------------------------------


@dataclass
class TrainResult:
    model: ExgNet
    scaler: FeatureScaler
    history: list[dict[str, float]]
    best_epoch: int
    best_val_f1: float
    checkpoint_path: Path | None = None


def _scaled(features_raw: np.ndarray, scaler: FeatureScaler) -> np.ndarray:
    return np.stack([scaler.apply(row) for row in features_raw])


def _base_val_metrics(model: ExgNet, val: PreparedData, batch_size: int = 64) -> tuple[float, float]:
    logits = _forward_base_logits(model, val.x, batch_size)
    report = evaluate_predictions(val.labels, logits.argmax(axis=1), model.config.n_classes)
    return report.accuracy, report.macro_f1


def _forward_base_logits(model: ExgNet, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    chunks = []
    with T.no_grad():
        for lo in range(0, len(x), batch_size):
            out = model.forward(Tensor(x[lo : lo + batch_size]), mode="eval")
            chunks.append(out.logits_base.data)
    return np.concatenate(chunks, axis=0)


def train_fold(
    train_records: list[EcgRecord],
    val_records: list[EcgRecord],
    model_config: ModelConfig,
    train_config: TrainConfig,
    preprocess_config: PreprocessConfig | None = None,
    run_dir: str | Path | None = None,
    label_map: dict[ClassLabel, int] | None = None,
) -> TrainResult:
    """Fit one model on the train split, selecting by validation macro F1
    (ties keep the most recent epoch, so a flat F1 curve returns the final
    parameters rather than an arbitrarily early snapshot).

    Deterministic for a fixed config: data order, dropout, and parameter
    initialization all derive from train_config.seed. Raises
    TrainingDivergedError the moment any loss component goes non-finite.
    """
    if not train_records or not val_records:
        raise ConfigError("train and validation splits must both be non-empty")
    train = prepare_dataset(train_records, model_config, preprocess_config,
                            with_features=True, with_masks=True, label_map=label_map)
    val = prepare_dataset(val_records, model_config, preprocess_config, label_map=label_map)

    scaler = fit_feature_scaler(train.features_raw)
    features = _scaled(train.features_raw, scaler)

    model = ExgNet(model_config, seed=train_config.seed)
    optimizer = Adam(model.params())
    shuffle_rng = np.random.default_rng([train_config.seed, 0x5F1E])
    dropout_rng = np.random.default_rng([train_config.seed, 0xD0])

    run_dir = Path(run_dir) if run_dir is not None else None
    step_log = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        step_log = open(run_dir / "steps.csv", "w", newline="", encoding="utf-8")
        step_writer = csv.writer(step_log)
        step_writer.writerow(["step", "ce_base", "ce_feat", "ce_joint", "ncc", "total"])

    history: list[dict[str, float]] = []
    best_state = {k: v.copy() for k, v in model.state().items()}
    best_f1 = -1.0
    best_epoch = -1
    step = 0
    n = len(train_records)
    try:
        for epoch in range(train_config.epochs):
            lr = lr_at_epoch(epoch, train_config)
            order = shuffle_rng.permutation(n)
            epoch_parts: list[dict[str, float]] = []
            for lo in range(0, n, train_config.batch_size):
                idx = order[lo : lo + train_config.batch_size]
                out = model.forward(Tensor(train.x[idx]), Tensor(features[idx]),
                                    mode="train", rng=dropout_rng)
                cam = training_cam(model, out.feat_map, train.labels[idx])
                loss, parts = total_loss(out.logits_base, out.logits_feat, out.logits_joint,
                                         train.labels[idx], cam, train.gt_masks[idx],
                                         train_config.weights)
                if not math.isfinite(parts["total"]):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch} step {step}: {parts}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step(lr)
                if step_log is not None:
                    step_writer.writerow([step] + [f"{parts[k]:.8f}" for k in
                                                   ("ce_base", "ce_feat", "ce_joint", "ncc", "total")])
                epoch_parts.append(parts)
                step += 1

            val_acc, val_f1 = _base_val_metrics(model, val)
            mean_total = float(np.mean([p["total"] for p in epoch_parts]))
            mean_ncc = float(np.mean([p["ncc"] for p in epoch_parts]))
            history.append({"epoch": epoch, "lr": lr, "loss_total": mean_total,
                            "loss_ncc": mean_ncc, "val_acc": val_acc, "val_f1": val_f1})
            if val_f1 >= best_f1:
                best_f1 = val_f1
                best_epoch = epoch
                best_state = {k: v.copy() for k, v in model.state().items()}
    finally:
        if step_log is not None:
            step_log.close()

    model.load_state(best_state)
    checkpoint_path = None
    if run_dir is not None:
        checkpoint_path = run_dir / "checkpoint.bin"
        save_model(model, scaler, checkpoint_path)
        with open(run_dir / "epochs.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "lr", "loss_total", "loss_ncc", "val_acc", "val_f1"])
            for row in history:
                writer.writerow([row["epoch"], f"{row['lr']:.3E}", f"{row['loss_total']:.8f}",
                                 f"{row['loss_ncc']:.8f}", f"{row['val_acc']:.6f}", f"{row['val_f1']:.6f}"])
    return TrainResult(model=model, scaler=scaler, history=history,
                       best_epoch=best_epoch, best_val_f1=best_f1,
                       checkpoint_path=checkpoint_path)


def save_model(model: ExgNet, scaler: FeatureScaler, path: str | Path) -> None:
    """One checkpoint file holding parameters, buffers, and the feature scaler."""
    arrays = dict(model.state())
    arrays["feature_scaler.mean"] = scaler.mean
    arrays["feature_scaler.std"] = scaler.std
    save_checkpoint(arrays, path)


def load_model(path: str | Path, model_config: ModelConfig) -> tuple[ExgNet, FeatureScaler]:
    arrays = load_checkpoint(path)
    scaler = FeatureScaler(mean=arrays.pop("feature_scaler.mean"),
                           std=arrays.pop("feature_scaler.std"))
    model = ExgNet(model_config, seed=0)
    model.load_state(arrays)
    return model, scaler


# -- evaluation ---------------------------------------------------------------


@dataclass
class EvaluateResult:
    report: EvalReport
    logits_base: np.ndarray
    predictions: np.ndarray
    mode: str


def evaluate(
    model: ExgNet,
    records: list[EcgRecord],
    mode: str = "base",
    scaler: FeatureScaler | None = None,
    preprocess_config: PreprocessConfig | None = None,
    batch_size: int = 64,
    label_map: dict[ClassLabel, int] | None = None,
) -> EvaluateResult:
    """Score a record set. mode "base" never computes per-record features;
    mode "features" routes the quantitative branch into the joint head."""
    if not records:
        raise ValueError("empty record set")
    if mode not in ("base", "features"):
        raise ValueError(f"mode must be 'base' or 'features', got {mode!r}")
    cfg = model.config
    if mode == "base":
        data = prepare_dataset(records, cfg, preprocess_config, label_map=label_map)
        logits_base = _forward_base_logits(model, data.x, batch_size)
        preds = logits_base.argmax(axis=1)
    else:
        if scaler is None:
            raise ConfigError("feature-mode evaluation needs the fitted feature scaler")
        data = prepare_dataset(records, cfg, preprocess_config, with_features=True,
                               label_map=label_map)
        features = _scaled(data.features_raw, scaler)
        base_chunks, joint_chunks = [], []
        with T.no_grad():
            for lo in range(0, len(records), batch_size):
                out = model.forward(Tensor(data.x[lo : lo + batch_size]),
                                    Tensor(features[lo : lo + batch_size]), mode="eval")
                base_chunks.append(out.logits_base.data)
                joint_chunks.append(out.logits_joint.data)
        logits_base = np.concatenate(base_chunks, axis=0)
        preds = np.concatenate(joint_chunks, axis=0).argmax(axis=1)
    report = evaluate_predictions(data.labels, preds, cfg.n_classes)
    return EvaluateResult(report=report, logits_base=logits_base, predictions=preds, mode=mode)


def mean_cam_alignment(model: ExgNet, records: list[EcgRecord],
                       preprocess_config: PreprocessConfig | None = None) -> float:
    """Average predicted-vs-ground-truth map correlation over a record set."""
    data = prepare_dataset(records, model.config, preprocess_config, with_masks=True)
    scores = []
    for i, rec in enumerate(records):
        gt = GtCam(values=data.gt_masks[i])
        rep = cam_report(model, rec.id, data.x[i, 0], gt, data.labels[i])
        scores.append(rep.ncc)
    return float(np.mean(scores))


# -- cross-validation ----------------------------------------------------------


@dataclass
class CrossValResult:
    fold_reports: list[EvalReport]
    mean_metrics: dict[str, float]
    aggregate_confusion: np.ndarray
    fold_results: list[TrainResult] = field(repr=False, default_factory=list)


def _fold_worker(args) -> tuple[int, EvalReport]:
    (fold, train_recs, val_recs, model_config, train_config,
     preprocess_config, run_dir, mode, label_map) = args
    result = train_fold(train_recs, val_recs, model_config, train_config,
                        preprocess_config, run_dir, label_map=label_map)
    ev = evaluate(result.model, val_recs, mode=mode, scaler=result.scaler,
                  preprocess_config=preprocess_config, label_map=label_map)
    return fold, ev.report


def cross_validate(
    records_by_fold: dict[int, list[EcgRecord]],
    model_config: ModelConfig,
    train_config: TrainConfig,
    preprocess_config: PreprocessConfig | None = None,
    run_dir: str | Path | None = None,
    mode: str = "base",
    parallel: int = 1,
    label_map: dict[ClassLabel, int] | None = None,
) -> CrossValResult:
    """Train one model per fold (holding that fold out) and aggregate reports."""
    folds = sorted(records_by_fold)
    if len(folds) < 2:
        raise ConfigError(f"need at least 2 folds, got {len(folds)}")
    jobs = []
    for fold in folds:
        val_recs = records_by_fold[fold]
        train_recs = [r for f in folds if f != fold for r in records_by_fold[f]]
        fold_dir = Path(run_dir) / f"fold{fold}" if run_dir is not None else None
        cfg = replace(train_config, seed=train_config.seed + fold)
        jobs.append((fold, train_recs, val_recs, model_config, cfg,
                     preprocess_config, fold_dir, mode, label_map))

    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = dict(pool.map(_fold_worker, jobs))
    else:
        results = dict(_fold_worker(job) for job in jobs)

    reports = [results[fold] for fold in folds]
    mean_metrics = {
        "accuracy": float(np.mean([r.accuracy for r in reports])),
        "macro_f1": float(np.mean([r.macro_f1 for r in reports])),
        "macro_sensitivity": float(np.mean([r.macro_sensitivity for r in reports])),
        "macro_specificity": float(np.mean([r.macro_specificity for r in reports])),
    }
    aggregate = np.sum([r.confusion for r in reports], axis=0)
    return CrossValResult(fold_reports=reports, mean_metrics=mean_metrics,
                          aggregate_confusion=aggregate)


def export_embeddings(model: ExgNet, records: list[EcgRecord],
                      preprocess_config: PreprocessConfig | None = None,
                      batch_size: int = 64) -> list[tuple[str, int, np.ndarray]]:
    """Eval-mode pooled embeddings, one row per record."""
    data = prepare_dataset(records, model.config, preprocess_config)
    rows = []
    with T.no_grad():
        for lo in range(0, len(records), batch_size):
            out = model.forward(Tensor(data.x[lo : lo + batch_size]), mode="eval")
            for j in range(out.gap_embed.shape[0]):
                i = lo + j
                rows.append((data.ids[i], int(data.labels[i]), out.gap_embed.data[j].copy()))
    return rows
