"""End-to-end command-line runs, in process, checking exit codes and outputs."""

from __future__ import annotations

import csv
import json

import pytest

from ecgxai.cli import main
from ecgxai.hrv import FEATURE_NAMES
from ecgxai.records import load_manifest


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1])


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    code = main(["synth", "--out", str(root), "--n", "16", "--seed", "5"])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def trained(cli_corpus, tmp_path_factory):
    """One fold trained through the command line; returns the relevant paths."""
    work = tmp_path_factory.mktemp("train")
    cfg = work / "run.cfg"
    cfg.write_text(
        "preset = desk\nepochs = 2\nbatch_size = 8\nfolds = 2\n"
        f"manifest = {cli_corpus / 'manifest.csv'}\n",
        encoding="utf-8",
    )
    out = work / "runs"
    code = main(["train", "--config", str(cfg), "--out", str(out), "--fold", "0",
                 "--seed", "0"])
    assert code == 0
    run_dirs = sorted(out.glob("run-*"))
    assert len(run_dirs) == 1
    ckpt = run_dirs[0] / "fold0" / "checkpoint.bin"
    eval_cfg = work / "eval.cfg"
    eval_cfg.write_text(
        f"preset = desk\ncheckpoint = {ckpt}\n"
        f"manifest = {cli_corpus / 'manifest.csv'}\n",
        encoding="utf-8",
    )
    return {"work": work, "run_dir": run_dirs[0], "ckpt": ckpt, "eval_cfg": eval_cfg,
            "corpus": cli_corpus}


# -- corpus generation -----------------------------------------------------------


def test_synth_summary_and_determinism(tmp_path, capsys):
    code, summary = run(["synth", "--out", str(tmp_path / "a"), "--n", "6", "--seed", "2"],
                        capsys)
    assert code == 0
    assert summary["status"] == "ok" and summary["command"] == "synth"
    assert summary["records"] == 6
    code2, _ = run(["synth", "--out", str(tmp_path / "b"), "--n", "6", "--seed", "2"],
                   capsys)
    assert code2 == 0
    assert (tmp_path / "a" / "manifest.csv").read_bytes() == \
           (tmp_path / "b" / "manifest.csv").read_bytes()
    m = load_manifest(tmp_path / "a" / "manifest.csv")
    entry = m.entries[0]
    assert (tmp_path / "a" / entry.path).read_bytes() == \
           (tmp_path / "b" / entry.path).read_bytes()


def test_ingest_assigns_folds(cli_corpus, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("folds = 2\n", encoding="utf-8")
    out = cli_corpus / "with_folds.csv"
    code, summary = run(["ingest", "--config", str(cfg),
                         "--manifest", str(cli_corpus / "manifest.csv"),
                         "--out", str(out), "--seed", "0"], capsys)
    assert code == 0
    assert summary["folds"] == {"0": 8, "1": 8}
    reloaded = load_manifest(out)
    assert all(e.fold in (0, 1) for e in reloaded.entries)


# -- error surfaces -----------------------------------------------------------------


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 1\n", encoding="utf-8")
    code, summary = run(["ingest", "--config", str(cfg), "--manifest", "x.csv",
                         "--out", str(tmp_path / "o.csv")], capsys)
    assert code == 1
    assert summary["status"] == "error" and summary["kind"] == "usage"
    assert "no_such_key" in summary["error"]


def test_missing_manifest_is_data_error(tmp_path, capsys):
    code, summary = run(["gtcam", "--manifest", str(tmp_path / "absent.csv"),
                         "--out", str(tmp_path / "masks.csv")], capsys)
    assert code == 2
    assert summary["kind"] == "data"


def test_manifest_required(tmp_path, capsys):
    code, summary = run(["gtcam", "--out", str(tmp_path / "masks.csv")], capsys)
    assert code == 1
    assert "manifest" in summary["error"]


def test_corrupt_record_is_data_error(tmp_path, capsys):
    code = main(["synth", "--out", str(tmp_path / "c"), "--n", "4", "--seed", "1"])
    assert code == 0
    m = load_manifest(tmp_path / "c" / "manifest.csv")
    victim = tmp_path / "c" / m.entries[0].path
    victim.write_bytes(victim.read_bytes()[:-2])
    code, summary = run(["hrv-features", "--manifest", str(tmp_path / "c" / "manifest.csv"),
                         "--out", str(tmp_path / "f.csv")], capsys)
    assert code == 2
    assert summary["kind"] == "data"


# -- per-record exports ----------------------------------------------------------------


def test_gtcam_table_shape(cli_corpus, tmp_path, capsys):
    out = tmp_path / "masks.csv"
    code, summary = run(["gtcam", "--manifest", str(cli_corpus / "manifest.csv"),
                         "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["id"] + [f"v{i}" for i in range(20)]
    assert len(rows) == 1 + 16
    for row in rows[1:]:
        assert len(row) == 21
        vals = [float(v) for v in row[1:]]
        assert max(vals) <= 1.0 and min(vals) >= 0.0
    assert summary["zero_masks"] == 0


def test_hrv_features_table(cli_corpus, tmp_path, capsys):
    out = tmp_path / "hrv.csv"
    code, summary = run(["hrv-features", "--manifest", str(cli_corpus / "manifest.csv"),
                         "--out", str(out)], capsys)
    assert code == 0 and summary["records"] == 16
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["id", "label"] + list(FEATURE_NAMES)
    assert len(rows) == 17


def test_preprocess_writes_clean_corpus(cli_corpus, tmp_path, capsys):
    out = tmp_path / "clean"
    code, summary = run(["preprocess", "--manifest", str(cli_corpus / "manifest.csv"),
                         "--out", str(out)], capsys)
    assert code == 0
    m = load_manifest(out / "manifest.csv")
    assert len(m.entries) == 16
    from ecgxai.records import load_record
    rec = load_record(m, m.entries[0], 32, 320)
    assert rec.samples.min() >= 0.0 and rec.samples.max() <= 1.0


# -- training and downstream consumers ----------------------------------------------------


def test_train_fold_run_dir_contents(trained):
    run_dir = trained["run_dir"]
    cfg_text = (run_dir / "config.txt").read_text(encoding="utf-8")
    lines = cfg_text.splitlines()
    assert lines == sorted(lines)
    assert any(line.startswith("epochs") for line in lines)
    fold = run_dir / "fold0"
    steps = (fold / "steps.csv").read_text().splitlines()
    assert steps[0] == "step,ce_base,ce_feat,ce_joint,ncc,total"
    assert (fold / "epochs.csv").exists()
    assert trained["ckpt"].exists()
    assert (fold / "checkpoint.bin.idx").exists()


def test_evaluate_both_modes(trained, tmp_path, capsys):
    for mode in ("base", "features"):
        code, summary = run(["evaluate", "--config", str(trained["eval_cfg"]),
                             "--mode", mode], capsys)
        assert code == 0, summary
        assert summary["mode"] == mode
        assert 0.0 <= summary["accuracy"] <= 1.0
    out = tmp_path / "metrics.csv"
    code, summary = run(["evaluate", "--config", str(trained["eval_cfg"]),
                         "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["metric", "value"]
    assert [r[0] for r in rows[1:]] == ["accuracy", "macro_f1",
                                        "macro_sensitivity", "macro_specificity"]


def test_evaluate_without_checkpoint_is_usage_error(trained, capsys):
    code, summary = run(["evaluate",
                         "--manifest", str(trained["corpus"] / "manifest.csv")], capsys)
    assert code == 1
    assert "checkpoint" in summary["error"]


def test_explain_writes_reports_and_cams(trained, tmp_path, capsys):
    out = tmp_path / "explain"
    code, summary = run(["explain", "--config", str(trained["eval_cfg"]),
                         "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.reader((out / "reports.csv").open()))
    assert rows[0] == ["id", "ncc", "l1", "l2", "predicted", "true", "degenerate"]
    assert len(rows) == 17
    first_id = rows[1][0]
    cam_rows = list(csv.reader((out / "cams" / f"{first_id}.cam.csv").open()))
    assert cam_rows[0] == ["segment", "pred", "gt"]
    assert len(cam_rows) == 21
    assert -1.0 <= summary["mean_ncc"] <= 1.0


def test_export_embeddings_table(trained, tmp_path, capsys):
    out = tmp_path / "emb.csv"
    code, summary = run(["export-embeddings", "--config", str(trained["eval_cfg"]),
                         "--out", str(out)], capsys)
    assert code == 0 and summary["embed_dim"] == 8
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["id", "label"] + [f"e{i}" for i in range(8)]
    assert len(rows) == 17


def test_train_unknown_fold_is_usage_error(trained, tmp_path, capsys):
    cfg = trained["work"] / "run.cfg"
    code, summary = run(["train", "--config", str(cfg), "--out", str(tmp_path),
                         "--fold", "9"], capsys)
    assert code == 1
    assert "fold 9" in summary["error"]
