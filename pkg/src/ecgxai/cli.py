"""Command-line entry point: one binary, one subcommand per pipeline stage.

Every subcommand ends by printing a single JSON summary line (status,
counts, output paths) and exits 0 on success, 1 on usage or configuration
errors, 2 on data integrity errors, and 3 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from .cam import cam_report
from .config import RunConfig, load_config
from .errors import ConfigError, IntegrityError, ManifestParseError, TrainingDivergedError
from .gtcam import GtCam, gt_cam_or_zero
from .hrv import FEATURE_NAMES
from .preprocess import preprocess
from .records import (
    EcgRecord,
    Manifest,
    ManifestEntry,
    assign_folds,
    label_index_map,
    load_manifest,
    load_record,
    save_manifest,
    write_record,
)
from .synth import generate_corpus
from .train import (
    cross_validate,
    evaluate,
    export_embeddings,
    load_model,
    prepare_dataset,
    record_features,
    train_fold,
)


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "preset", None):
        cfg.set("preset", args.preset)
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", str(args.seed))
    return cfg


def _load_records(args, cfg: RunConfig) -> tuple[Manifest, list[EcgRecord]]:
    manifest_path = getattr(args, "manifest", None) or cfg.get("manifest")
    if not manifest_path:
        raise ConfigError("a manifest is required: pass --manifest or set the config key")
    manifest = load_manifest(manifest_path, profile=str(cfg.get("profile", "all")))
    records = [load_record(manifest, e, cfg.sampling_rate, cfg.record_length)
               for e in manifest.entries]
    return manifest, records


def _check_labels(records: list[EcgRecord], cfg: RunConfig, label_map) -> None:
    n_classes = int(cfg.get("n_classes", 2))
    for rec in records:
        if label_map[rec.label] >= n_classes:
            raise ConfigError(
                f"record {rec.id!r} has label {rec.label.value} (class index "
                f"{label_map[rec.label]}) but n_classes = {n_classes}")


def _label_map(cfg: RunConfig):
    return label_index_map(str(cfg.get("profile", "all")))


def _require_out(args) -> Path:
    if not getattr(args, "out", None):
        raise ConfigError("--out is required for this command")
    return Path(args.out)


def _load_checkpointed_model(cfg: RunConfig):
    ckpt = cfg.get("checkpoint")
    if not ckpt:
        raise ConfigError("set the 'checkpoint' config key to the trained model path")
    return load_model(ckpt, cfg.model_config())


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> dict:
    cfg = _resolve_config(args)
    out = _require_out(args)
    manifest = generate_corpus(out, n=args.n, n_classes=args.classes, seed=cfg.seed)
    return {"records": len(manifest), "outputs": [str(out / "manifest.csv")]}


def cmd_ingest(args) -> dict:
    cfg = _resolve_config(args)
    manifest, records = _load_records(args, cfg)
    k = int(cfg.get("folds", 5))
    manifest = assign_folds(manifest, k=k, seed=cfg.seed)
    out = _require_out(args)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_manifest(manifest, out)
    per_fold = {f: len(manifest.fold_of(f)) for f in range(k)}
    return {"records": len(records), "folds": per_fold, "outputs": [str(out)]}


def cmd_preprocess(args) -> dict:
    cfg = _resolve_config(args)
    manifest, records = _load_records(args, cfg)
    out = _require_out(args)
    (out / "records").mkdir(parents=True, exist_ok=True)
    pcfg = cfg.preprocess_config()
    entries = []
    for entry, rec in zip(manifest.entries, records):
        clean = preprocess(rec, pcfg)
        rel = f"records/{rec.id}.f32"
        write_record(EcgRecord(id=rec.id, sampling_rate=rec.sampling_rate,
                               samples=clean, label=rec.label), out / rel)
        entries.append(ManifestEntry(id=entry.id, path=rel, label=entry.label, fold=entry.fold))
    save_manifest(Manifest(entries=tuple(entries), root=out), out / "manifest.csv")
    return {"records": len(records), "outputs": [str(out / "manifest.csv")]}


def cmd_hrv_features(args) -> dict:
    cfg = _resolve_config(args)
    _, records = _load_records(args, cfg)
    out = _require_out(args)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + list(FEATURE_NAMES))
        for rec in records:
            vec = record_features(rec)
            writer.writerow([rec.id, rec.label.value] + [f"{v:.9g}" for v in vec])
    return {"records": len(records), "outputs": [str(out)]}


def cmd_gtcam(args) -> dict:
    cfg = _resolve_config(args)
    _, records = _load_records(args, cfg)
    out = _require_out(args)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_segments = int(cfg.get("n_segments", 20))
    zero_masks = 0
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"v{i}" for i in range(n_segments)])
        for rec in records:
            mask = gt_cam_or_zero(rec, n_segments=n_segments)
            zero_masks += int(mask.is_zero)
            writer.writerow([rec.id] + [f"{v:.9g}" for v in mask.values])
    return {"records": len(records), "zero_masks": zero_masks, "outputs": [str(out)]}


def _records_by_fold(manifest: Manifest, records: list[EcgRecord], cfg: RunConfig) -> dict[int, list[EcgRecord]]:
    if any(e.fold is None for e in manifest.entries):
        manifest = assign_folds(manifest, k=int(cfg.get("folds", 5)), seed=cfg.seed)
    by_id = {r.id: r for r in records}
    grouped: dict[int, list[EcgRecord]] = {}
    for entry in manifest.entries:
        grouped.setdefault(entry.fold, []).append(by_id[entry.id])
    return grouped


def cmd_train(args) -> dict:
    cfg = _resolve_config(args)
    manifest, records = _load_records(args, cfg)
    label_map = _label_map(cfg)
    _check_labels(records, cfg, label_map)
    model_cfg = cfg.model_config()
    train_cfg = cfg.train_config()
    pcfg = cfg.preprocess_config()
    out_root = Path(args.out) if args.out else Path("runs")
    run_dir = out_root / f"run-{cfg.config_hash()}-s{cfg.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.resolved_text(), encoding="utf-8")

    grouped = _records_by_fold(manifest, records, cfg)
    if args.fold is not None:
        if args.fold not in grouped:
            raise ConfigError(f"fold {args.fold} not present in the manifest")
        val = grouped[args.fold]
        train_recs = [r for f, recs in sorted(grouped.items()) if f != args.fold for r in recs]
        result = train_fold(train_recs, val, model_cfg, train_cfg, pcfg,
                            run_dir / f"fold{args.fold}", label_map=label_map)
        ev = evaluate(result.model, val, mode="base", scaler=result.scaler,
                      preprocess_config=pcfg, label_map=label_map)
        return {
            "run_dir": str(run_dir),
            "fold": args.fold,
            "best_epoch": result.best_epoch,
            "val_accuracy": round(ev.report.accuracy, 6),
            "val_macro_f1": round(ev.report.macro_f1, 6),
            "outputs": [str(result.checkpoint_path)],
        }

    mode = "features" if getattr(args, "mode", "base") == "features" else "base"
    cv = cross_validate(grouped, model_cfg, train_cfg, pcfg, run_dir, mode=mode,
                        parallel=max(1, args.parallel_folds), label_map=label_map)
    _write_cv_report(run_dir / "report.csv", cv)
    np.savetxt(run_dir / "confusion.csv", cv.aggregate_confusion, fmt="%d", delimiter=",")
    return {
        "run_dir": str(run_dir),
        "folds": len(cv.fold_reports),
        "mean": {k: round(v, 6) for k, v in cv.mean_metrics.items()},
        "outputs": [str(run_dir / "report.csv"), str(run_dir / "confusion.csv")],
    }


def _write_cv_report(path: Path, cv) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "accuracy", "macro_f1", "macro_sensitivity", "macro_specificity"])
        for i, rep in enumerate(cv.fold_reports):
            writer.writerow([i, f"{rep.accuracy:.6f}", f"{rep.macro_f1:.6f}",
                             f"{rep.macro_sensitivity:.6f}", f"{rep.macro_specificity:.6f}"])
        m = cv.mean_metrics
        writer.writerow(["average", f"{m['accuracy']:.6f}", f"{m['macro_f1']:.6f}",
                         f"{m['macro_sensitivity']:.6f}", f"{m['macro_specificity']:.6f}"])


def cmd_evaluate(args) -> dict:
    cfg = _resolve_config(args)
    manifest, records = _load_records(args, cfg)
    label_map = _label_map(cfg)
    _check_labels(records, cfg, label_map)
    if args.fold is not None:
        keep = {e.id for e in manifest.fold_of(args.fold)}
        records = [r for r in records if r.id in keep]
        if not records:
            raise ConfigError(f"fold {args.fold} holds no records")
    model, scaler = _load_checkpointed_model(cfg)
    mode = "features" if args.mode == "features" else "base"
    result = evaluate(model, records, mode=mode, scaler=scaler,
                      preprocess_config=cfg.preprocess_config(), label_map=label_map)
    rep = result.report
    summary = {
        "records": len(records),
        "mode": mode,
        "accuracy": round(rep.accuracy, 6),
        "macro_f1": round(rep.macro_f1, 6),
        "macro_sensitivity": round(rep.macro_sensitivity, 6),
        "macro_specificity": round(rep.macro_specificity, 6),
    }
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for key in ("accuracy", "macro_f1", "macro_sensitivity", "macro_specificity"):
                writer.writerow([key, f"{summary[key]:.6f}"])
        summary["outputs"] = [str(out)]
    return summary


def cmd_explain(args) -> dict:
    cfg = _resolve_config(args)
    _, records = _load_records(args, cfg)
    label_map = _label_map(cfg)
    _check_labels(records, cfg, label_map)
    model, _ = _load_checkpointed_model(cfg)
    out = _require_out(args)
    cams_dir = out / "cams"
    cams_dir.mkdir(parents=True, exist_ok=True)
    pcfg = cfg.preprocess_config()
    data = prepare_dataset(records, model.config, pcfg, with_masks=True, label_map=label_map)
    nccs = []
    with open(out / "reports.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "ncc", "l1", "l2", "predicted", "true", "degenerate"])
        for i, rec in enumerate(records):
            gt = GtCam(values=data.gt_masks[i])
            rep = cam_report(model, rec.id, data.x[i, 0], gt, data.labels[i])
            nccs.append(rep.ncc)
            writer.writerow([rec.id, f"{rep.ncc:.6f}", f"{rep.l1:.6f}", f"{rep.l2:.6f}",
                             rep.predicted_class, rep.true_class, int(rep.degenerate)])
            with open(cams_dir / f"{rec.id}.cam.csv", "w", newline="", encoding="utf-8") as cf:
                cw = csv.writer(cf)
                cw.writerow(["segment", "pred", "gt"])
                for s in range(len(rep.pred_cam)):
                    cw.writerow([s, f"{rep.pred_cam[s]:.6f}", f"{gt.values[s]:.6f}"])
    return {
        "records": len(records),
        "mean_ncc": round(float(np.mean(nccs)), 6),
        "outputs": [str(out / "reports.csv"), str(cams_dir)],
    }


def cmd_export_embeddings(args) -> dict:
    cfg = _resolve_config(args)
    _, records = _load_records(args, cfg)
    label_map = _label_map(cfg)
    model, _ = _load_checkpointed_model(cfg)
    out = _require_out(args)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = export_embeddings(model, records, cfg.preprocess_config())
    dim = model.config.embed_dim
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"e{i}" for i in range(dim)])
        for rec_id, label, emb in rows:
            writer.writerow([rec_id, label] + [f"{v:.9g}" for v in emb])
    return {"records": len(rows), "embed_dim": dim, "outputs": [str(out)]}


# -- wiring ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecgxai",
        description="Single-lead arrhythmia pipeline: data, training, evaluation, explanations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, manifest=True, out=True, fold=False,
               mode=False, parallel=False) -> None:
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--preset", choices=("paper", "desk"), default=None,
                       help="architecture/training preset (overrides config)")
        if manifest:
            p.add_argument("--manifest", help="record manifest CSV")
        if out:
            p.add_argument("--out", help="output file or directory")
        if fold:
            p.add_argument("--fold", type=int, default=None, help="restrict to one fold")
        if mode:
            p.add_argument("--mode", choices=("base", "features"), default="base",
                           help="score from the base head alone, or the joint head")
        if parallel:
            p.add_argument("--parallel-folds", type=int, default=1,
                           help="train folds in this many worker processes")

    p = sub.add_parser("synth", help="generate the synthetic anomaly corpus")
    common(p, manifest=False)
    p.add_argument("--n", type=int, default=200, help="record count")
    p.add_argument("--classes", type=int, default=2, help="class count")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate a manifest and assign stratified folds")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="baseline-correct and normalize records")
    common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("hrv-features", help="write the 17-feature vector per record")
    common(p)
    p.set_defaults(func=cmd_hrv_features)

    p = sub.add_parser("gtcam", help="write ground-truth attention masks per record")
    common(p)
    p.set_defaults(func=cmd_gtcam)

    p = sub.add_parser("train", help="train one fold or cross-validate")
    common(p, fold=True, mode=True, parallel=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a record set")
    common(p, fold=True, mode=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="emit per-record attention maps and alignment")
    common(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("export-embeddings", help="dump pooled embeddings as CSV")
    common(p)
    p.set_defaults(func=cmd_export_embeddings)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    summary: dict = {"command": args.command}
    try:
        summary.update(args.func(args))
        summary["status"] = "ok"
        code = 0
    except ConfigError as exc:
        summary.update(status="error", kind="usage", error=str(exc))
        code = 1
    except (ManifestParseError, IntegrityError, FileNotFoundError) as exc:
        summary.update(status="error", kind="data", error=str(exc))
        code = 2
    except TrainingDivergedError as exc:
        summary.update(status="error", kind="runtime", error=str(exc))
        code = 3
    except Exception as exc:  # anything unplanned is a runtime failure
        summary.update(status="error", kind="runtime", error=f"{type(exc).__name__}: {exc}")
        if "--debug" in (argv or sys.argv):
            traceback.print_exc()
        code = 3
    print(json.dumps(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
