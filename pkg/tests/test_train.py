"""Schedules, dataset assembly, the training loop, and evaluation modes."""

from __future__ import annotations

import math

import numpy as np
import pytest

import ecgxai.train as train_mod
from ecgxai.errors import ConfigError, TrainingDivergedError
from ecgxai.losses import LossWeights
from ecgxai.model import ModelConfig
from ecgxai.records import ClassLabel, label_index_map
from ecgxai.train import (
    TrainConfig,
    constant_schedule,
    cross_validate,
    evaluate,
    export_embeddings,
    load_model,
    lr_at_epoch,
    mean_cam_alignment,
    paper_schedule,
    prepare_dataset,
    record_features,
    save_model,
    train_fold,
)


def _desk_train_config(epochs=1, seed=0, batch_size=8, weights=None):
    return TrainConfig(batch_size=batch_size, epochs=epochs, seed=seed,
                       weights=weights if weights is not None else LossWeights(),
                       schedule=constant_schedule(max(epochs, 1), 1e-3), preset="desk")


# -- learning-rate schedule ----------------------------------------------------


def test_default_schedule_boundary_values():
    cfg = TrainConfig.paper(epochs=200)
    assert lr_at_epoch(0, cfg) == pytest.approx(2e-4)
    assert lr_at_epoch(59, cfg) == pytest.approx(2e-4)
    assert lr_at_epoch(60, cfg) == pytest.approx(1e-4)
    assert lr_at_epoch(70, cfg) == pytest.approx(5e-5)
    assert lr_at_epoch(100, cfg) == pytest.approx(5e-5)


def test_cosine_arc_interior_closed_form():
    cfg = TrainConfig.paper(epochs=200)
    for t in range(20):
        want = 1e-4 * (1 + math.cos(math.pi * t / 20)) / 2
        assert lr_at_epoch(60 + t, cfg) == pytest.approx(want, rel=1e-12)


def test_peak_halves_every_forty_epochs():
    cfg = TrainConfig.paper(epochs=200)
    assert lr_at_epoch(80, cfg) == pytest.approx(1e-4)    # second arc, same peak
    assert lr_at_epoch(140, cfg) == pytest.approx(2.5e-5)
    assert lr_at_epoch(180, cfg) == pytest.approx(1.25e-5)


def test_lr_range_check_and_constant_schedule():
    cfg = _desk_train_config(epochs=5)
    assert lr_at_epoch(4, cfg) == pytest.approx(1e-3)
    with pytest.raises(ValueError):
        lr_at_epoch(5, cfg)
    with pytest.raises(ValueError):
        lr_at_epoch(-1, cfg)


def test_paper_schedule_covers_epochs():
    phases = paper_schedule(epochs=200)
    assert phases[0] == ("const", 60, 2e-4)
    assert sum(p[1] for p in phases) >= 200
    assert all(p[0] in ("const", "cosine") for p in phases)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=-1)


# -- dataset assembly -------------------------------------------------------------


def test_prepare_dataset_shapes_and_options(small_corpus):
    _, records = small_corpus
    cfg = ModelConfig.desk()
    plain = prepare_dataset(records[:6], cfg)
    assert plain.x.shape == (6, 1, 320)
    assert plain.labels.shape == (6,)
    assert plain.features_raw is None and plain.gt_masks is None
    assert plain.ids == [r.id for r in records[:6]]

    full = prepare_dataset(records[:6], cfg, with_features=True, with_masks=True)
    assert full.features_raw.shape == (6, 17)
    assert full.gt_masks.shape == (6, 20)
    assert np.all(full.x >= 0.0) and np.all(full.x <= 1.0)


def test_prepare_dataset_label_mapping(small_corpus):
    _, records = small_corpus
    data = prepare_dataset(records[:4], ModelConfig.desk())
    want = [label_index_map("all")[r.label] for r in records[:4]]
    np.testing.assert_array_equal(data.labels, want)
    flipped = {ClassLabel.SR: 1, ClassLabel.SB: 0}
    data2 = prepare_dataset(records[:4], ModelConfig.desk(), label_map=flipped)
    np.testing.assert_array_equal(data2.labels, [1 - w for w in want])


def test_record_features_zero_fallback():
    from ecgxai.records import EcgRecord
    rec = EcgRecord(id="flat", sampling_rate=32, samples=np.zeros(320), label=ClassLabel.SR)
    np.testing.assert_array_equal(record_features(rec), np.zeros(17))


# -- training loop ------------------------------------------------------------------


def test_train_fold_is_deterministic(small_corpus, tmp_path):
    _, records = small_corpus
    train_recs, val_recs = records[:12], records[12:18]
    cfg = ModelConfig.desk()
    results = []
    for run in ("a", "b"):
        res = train_fold(train_recs, val_recs, cfg, _desk_train_config(epochs=2, seed=3),
                         run_dir=tmp_path / run)
        results.append(res)
    sa, sb = results[0].model.state(), results[1].model.state()
    for name in sa:
        np.testing.assert_array_equal(sa[name], sb[name])
    assert results[0].history == results[1].history
    assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == \
           (tmp_path / "b" / "checkpoint.bin").read_bytes()


def test_train_fold_writes_logs(small_corpus, tmp_path):
    _, records = small_corpus
    res = train_fold(records[:8], records[8:12], ModelConfig.desk(),
                     _desk_train_config(epochs=2, seed=0), run_dir=tmp_path / "run")
    steps = (tmp_path / "run" / "steps.csv").read_text().splitlines()
    assert steps[0] == "step,ce_base,ce_feat,ce_joint,ncc,total"
    assert len(steps) == 1 + 2 * 1   # 8 records / batch 8 = 1 step per epoch
    epochs = (tmp_path / "run" / "epochs.csv").read_text().splitlines()
    assert epochs[0].startswith("epoch,lr,")
    assert len(epochs) == 3
    assert res.checkpoint_path is not None and res.checkpoint_path.exists()
    assert len(res.history) == 2
    assert 0 <= res.best_epoch < 2


def test_train_fold_zero_epochs_keeps_initial_state(small_corpus):
    _, records = small_corpus
    res = train_fold(records[:8], records[8:12], ModelConfig.desk(),
                     _desk_train_config(epochs=0, seed=7))
    from ecgxai.model import ExgNet
    fresh = ExgNet(ModelConfig.desk(), seed=7)
    for name, arr in fresh.state().items():
        np.testing.assert_array_equal(res.model.state()[name], arr)
    assert res.best_epoch == -1
    assert res.history == []


def test_train_fold_rejects_empty_splits(small_corpus):
    _, records = small_corpus
    with pytest.raises(ConfigError):
        train_fold([], records[:4], ModelConfig.desk(), _desk_train_config())


def test_training_diverges_loudly(small_corpus):
    _, records = small_corpus
    bad = LossWeights(w_base=float("inf"))
    with pytest.raises(TrainingDivergedError):
        train_fold(records[:8], records[8:12], ModelConfig.desk(),
                   _desk_train_config(epochs=1, weights=bad))


def test_checkpoint_roundtrip_restores_predictions(small_corpus, tmp_path):
    _, records = small_corpus
    res = train_fold(records[:8], records[8:12], ModelConfig.desk(),
                     _desk_train_config(epochs=1, seed=1))
    path = tmp_path / "model.bin"
    save_model(res.model, res.scaler, path)
    model2, scaler2 = load_model(path, ModelConfig.desk())
    np.testing.assert_array_equal(scaler2.mean, res.scaler.mean.astype("<f4").astype(np.float64))

    ev1 = evaluate(model2, records[8:12], mode="base")
    ev2 = evaluate(model2, records[8:12], mode="base")
    np.testing.assert_array_equal(ev1.logits_base, ev2.logits_base)
    # quantized weights give near-identical scores to the trained model
    ev0 = evaluate(res.model, records[8:12], mode="base")
    np.testing.assert_allclose(ev1.logits_base, ev0.logits_base, atol=1e-4)


# -- evaluation modes -----------------------------------------------------------------


def test_base_mode_skips_feature_machinery(small_corpus, monkeypatch):
    _, records = small_corpus
    res = train_fold(records[:8], records[8:12], ModelConfig.desk(),
                     _desk_train_config(epochs=1, seed=2))

    calls = {"n": 0}
    real = train_mod.record_features

    def spy(record):
        calls["n"] += 1
        return real(record)

    monkeypatch.setattr(train_mod, "record_features", spy)
    ev_base = evaluate(res.model, records[12:18], mode="base", scaler=res.scaler)
    assert calls["n"] == 0
    ev_feat = evaluate(res.model, records[12:18], mode="features", scaler=res.scaler)
    assert calls["n"] == len(records[12:18])

    # the convolutional path's scores are unaffected by the extra branch
    np.testing.assert_array_equal(ev_base.logits_base, ev_feat.logits_base)
    assert ev_base.mode == "base" and ev_feat.mode == "features"


def test_features_mode_requires_scaler(small_corpus):
    _, records = small_corpus
    res = train_fold(records[:8], records[8:12], ModelConfig.desk(),
                     _desk_train_config(epochs=1, seed=2))
    with pytest.raises(ConfigError):
        evaluate(res.model, records[:4], mode="features", scaler=None)
    with pytest.raises(ValueError):
        evaluate(res.model, records[:4], mode="nope")
    with pytest.raises(ValueError):
        evaluate(res.model, [], mode="base")


def test_mean_cam_alignment_bounded(small_corpus):
    _, records = small_corpus
    res = train_fold(records[:8], records[8:12], ModelConfig.desk(),
                     _desk_train_config(epochs=1, seed=4))
    score = mean_cam_alignment(res.model, records[12:16])
    assert -1.0 - 1e-9 <= score <= 1.0 + 1e-9


# -- cross-validation -------------------------------------------------------------------


def test_cross_validate_aggregates(small_corpus, tmp_path):
    _, records = small_corpus
    grouped = {0: records[0:8], 1: records[8:16]}
    cv = cross_validate(grouped, ModelConfig.desk(), _desk_train_config(epochs=1, seed=0),
                        run_dir=tmp_path, mode="base")
    assert len(cv.fold_reports) == 2
    total = sum(r.confusion.sum() for r in cv.fold_reports)
    assert cv.aggregate_confusion.sum() == total == 16
    for key in ("accuracy", "macro_f1", "macro_sensitivity", "macro_specificity"):
        want = float(np.mean([getattr(r, key) for r in cv.fold_reports]))
        assert cv.mean_metrics[key] == pytest.approx(want)
    assert (tmp_path / "fold0" / "checkpoint.bin").exists()
    assert (tmp_path / "fold1" / "checkpoint.bin").exists()


def test_cross_validate_needs_two_folds(small_corpus):
    _, records = small_corpus
    with pytest.raises(ConfigError):
        cross_validate({0: records[:8]}, ModelConfig.desk(), _desk_train_config())


# -- embeddings ----------------------------------------------------------------------------


def test_export_embeddings_rows(small_corpus):
    _, records = small_corpus
    res = train_fold(records[:8], records[8:12], ModelConfig.desk(),
                     _desk_train_config(epochs=1, seed=5))
    rows = export_embeddings(res.model, records[:5])
    assert len(rows) == 5
    for (rid, label, emb), rec in zip(rows, records[:5]):
        assert rid == rec.id
        assert label in (0, 1)
        assert emb.shape == (8,)
        assert np.all(np.isfinite(emb))
