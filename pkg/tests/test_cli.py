"""Command-line flows end to end: exit codes, artifacts, manifests, plots."""

from __future__ import annotations

import argparse
import hashlib
import json
import re

import numpy as np
import pytest
from conftest import make_documents

import lusoforge
import lusoforge.cli as cli
from lusoforge import corpus as corpus_mod
from lusoforge import tokenizer as tok_mod
from lusoforge.errors import DataError
from lusoforge.finetune import TASKS, synthetic_task_examples, write_task_tsv
from lusoforge.pretrain import LossLog, LossLogEntry

RTE = TASKS["rte"]


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """One full chain: filter -> tokenizer -> pretrain -> finetune."""
    root = tmp_path_factory.mktemp("cliws")
    corpus_path = root / "corpus.jsonl"
    corpus_mod.write_jsonl(make_documents({"OSCAR": 12, "DCEP": 12}), corpus_path)

    filt = root / "filtered"
    assert cli.main(["corpus", "filter", "--input", str(corpus_path),
                     "--out", str(filt)]) == 0
    filtered = filt / "filtered.jsonl"

    tok_dir = root / "tok"
    assert cli.main(["tokenizer", "train", "--input", str(filtered),
                     "--vocab-size", "160", "--out", str(tok_dir)]) == 0
    vocab = tok_dir / "vocab.json"

    pre = root / "pre"
    assert cli.main(["pretrain", "--input", str(filtered), "--tokenizer", str(vocab),
                     "--preset", "micro", "--seq-len", "32", "--micro-batch-size", "4",
                     "--accumulation-steps", "1", "--peak-lr", "5e-4",
                     "--warmup-steps", "2", "--total-steps", "8",
                     "--dropout-rate", "0.0", "--checkpoint-every", "0",
                     "--seed", "7", "--out", str(pre)]) == 0

    train_tsv = root / "rte_train.tsv"
    test_tsv = root / "rte_test.tsv"
    write_task_tsv(synthetic_task_examples(RTE, 24, seed=30), train_tsv, RTE)
    write_task_tsv(synthetic_task_examples(RTE, 8, seed=31), test_tsv, RTE)

    fin = root / "fin"
    assert cli.main(["finetune", "--task", "rte", "--checkpoint", str(pre / "model.ckpt"),
                     "--tokenizer", str(vocab), "--train", str(train_tsv),
                     "--lr", "1e-3", "--dropout", "0.0", "--epochs", "1",
                     "--batch-size", "8", "--seq-len", "32",
                     "--seed", "41", "--out", str(fin)]) == 0

    return {"root": root, "corpus": corpus_path, "filtered": filtered,
            "vocab": vocab, "pre": pre, "fin": fin,
            "train_tsv": train_tsv, "test_tsv": test_tsv}


# ---------------------------------------------------------------------------
# exit codes and usage errors


def test_no_args_prints_usage(capsys):
    assert cli.main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_command(capsys):
    assert cli.main(["frobnicate"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_bare_group_prints_usage(capsys):
    assert cli.main(["corpus"]) == 1
    assert cli.main(["tokenizer"]) == 1


def test_missing_required_flag(capsys):
    assert cli.main(["corpus", "filter"]) == 1
    assert "required" in capsys.readouterr().err


def test_missing_input_file_is_data_error(tmp_path, capsys):
    rc = cli.main(["corpus", "filter", "--input", str(tmp_path / "absent.jsonl"),
                   "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "data error" in capsys.readouterr().err


def test_unknown_task_is_usage_error(tmp_path, capsys):
    rc = cli.main(["finetune", "--task", "nope", "--checkpoint", "x",
                   "--tokenizer", "y", "--train", "z", "--out", str(tmp_path)])
    assert rc == 1
    assert "unknown task" in capsys.readouterr().err


def test_config_file_must_be_json_object(tmp_path):
    bad = tmp_path / "cfg.json"
    bad.write_text("[1, 2]", encoding="utf-8")
    rc = cli.main(["tokenizer", "train", "--input", "whatever.jsonl",
                   "--config", str(bad), "--out", str(tmp_path / "out")])
    assert rc == 2


def test_numerical_abort_exit_code(ws, tmp_path):
    with np.errstate(over="ignore", invalid="ignore"):
        rc = cli.main(["pretrain", "--input", str(ws["filtered"]),
                       "--tokenizer", str(ws["vocab"]), "--preset", "micro",
                       "--seq-len", "32", "--micro-batch-size", "4",
                       "--accumulation-steps", "1", "--peak-lr", "1e6",
                       "--warmup-steps", "1", "--total-steps", "40",
                       "--dropout-rate", "0.0", "--checkpoint-every", "0",
                       "--out", str(tmp_path)])
    assert rc == 3


# ---------------------------------------------------------------------------
# corpus commands


def test_corpus_filter_artifacts(ws):
    docs = corpus_mod.read_jsonl(ws["filtered"])
    assert len(docs) == 24  # clean synthetic corpus: everything passes
    report = json.loads((ws["filtered"].parent / "filter_report.json").read_text())
    assert report["input_count"] == 24
    assert report["kept_count"] == 24
    man = json.loads((ws["filtered"].parent / "manifest.json").read_text())
    assert man["command"] == "corpus filter"
    assert man["seed"] == 0
    assert man["code_version"] == lusoforge.__version__
    assert man["finished_at"]
    digest = hashlib.sha256(ws["corpus"].read_bytes()).hexdigest()
    assert man["input_digests"][str(ws["corpus"])] == digest
    assert str(ws["filtered"]) in man["outputs"]


def test_corpus_filter_country_code(ws, tmp_path):
    out = tmp_path / "br"
    assert cli.main(["corpus", "filter", "--input", str(ws["corpus"]),
                     "--cc", "br", "--out", str(out)]) == 0
    report = json.loads((out / "filter_report.json").read_text())
    assert report["kept_count"] == 0  # fixture urls are all .pt
    # an emptied corpus is a data error one stage later
    rc = cli.main(["tokenizer", "train", "--input", str(out / "filtered.jsonl"),
                   "--out", str(tmp_path / "tok")])
    assert rc == 2


def test_corpus_stats_cli(ws, tmp_path, capsys):
    out = tmp_path / "stats"
    assert cli.main(["corpus", "stats", "--input", str(ws["corpus"]),
                     "--out", str(out)]) == 0
    captured = capsys.readouterr().out
    assert "OSCAR:" in captured and "DCEP:" in captured
    report = json.loads((out / "stats_report.json").read_text())
    assert report["sources"]["OSCAR"]["documents"] == 12
    assert report["sources"]["OSCAR"]["doc_proportion"] == pytest.approx(0.5)
    assert (out / "manifest.json").exists()


# ---------------------------------------------------------------------------
# tokenizer command


def test_tokenizer_train_artifacts(ws):
    model = tok_mod.load_tokenizer(ws["vocab"])
    assert model.vocab_size <= 160
    man = json.loads((ws["vocab"].parent / "manifest.json").read_text())
    assert man["command"] == "tokenizer train"
    assert man["config"]["vocab_size"] == 160


def test_tokenizer_train_deterministic_bytes(ws, tmp_path):
    out = tmp_path / "tok2"
    assert cli.main(["tokenizer", "train", "--input", str(ws["filtered"]),
                     "--vocab-size", "160", "--out", str(out)]) == 0
    assert (out / "vocab.json").read_bytes() == ws["vocab"].read_bytes()


def test_config_precedence(ws, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"vocab_size": 64, "seed": 9}), encoding="utf-8")

    out1 = tmp_path / "from_file"
    assert cli.main(["tokenizer", "train", "--input", str(ws["filtered"]),
                     "--config", str(cfg), "--out", str(out1)]) == 0
    man1 = json.loads((out1 / "manifest.json").read_text())
    assert man1["config"]["vocab_size"] == 64  # file beats default
    assert man1["seed"] == 9

    out2 = tmp_path / "from_cli"
    assert cli.main(["tokenizer", "train", "--input", str(ws["filtered"]),
                     "--config", str(cfg), "--vocab-size", "96", "--seed", "3",
                     "--out", str(out2)]) == 0
    man2 = json.loads((out2 / "manifest.json").read_text())
    assert man2["config"]["vocab_size"] == 96  # flag beats file
    assert man2["seed"] == 3

    out3 = tmp_path / "defaults"
    assert cli.main(["tokenizer", "train", "--input", str(ws["filtered"]),
                     "--out", str(out3)]) == 0
    man3 = json.loads((out3 / "manifest.json").read_text())
    assert man3["config"]["vocab_size"] == 8192
    assert man3["seed"] == 0


# ---------------------------------------------------------------------------
# pretrain command


def test_pretrain_artifacts(ws):
    pre = ws["pre"]
    for name in ("model.ckpt", "loss_log.csv", "loss_curve.csv",
                 "loss_curve.svg", "manifest.json"):
        assert (pre / name).exists(), name
    log = LossLog.from_csv(pre / "loss_log.csv")
    assert len(log) == 8
    curve_lines = (pre / "loss_curve.csv").read_text().splitlines()
    assert curve_lines[0] == "step,loss,ema_loss"
    assert len(curve_lines) == 9
    assert (pre / "loss_curve.svg").read_text().startswith("<svg")
    man = json.loads((pre / "manifest.json").read_text())
    assert man["command"] == "pretrain"
    assert man["config"]["preset"] == "micro"
    assert man["config"]["total_steps"] == 8
    assert len(man["input_digests"]) == 2  # corpus + vocabulary
    assert len(man["outputs"]) == 4


# ---------------------------------------------------------------------------
# finetune / eval / sweep commands


def test_finetune_artifacts(ws):
    fin = ws["fin"]
    assert (fin / "model_finetuned.ckpt").exists()
    report = json.loads((fin / "finetune_report.json").read_text())
    assert report["task"] == "rte"
    assert report["metric"] == "accuracy"
    assert report["grid_point"] == {"dropout": 0.0, "lr": 1e-3,
                                    "precision": "fp32", "seed": 41}
    assert 0.0 <= report["dev_score"] <= 1.0
    assert len(report["epoch_scores"]) == 1
    man = json.loads((fin / "manifest.json").read_text())
    assert man["command"] == "finetune"
    assert man["config"]["task"] == "rte"


def test_eval_cli(ws, tmp_path, capsys):
    out = tmp_path / "eval"
    rc = cli.main(["eval", "--task", "rte",
                   "--checkpoint", str(ws["fin"] / "model_finetuned.ckpt"),
                   "--tokenizer", str(ws["vocab"]), "--data", str(ws["test_tsv"]),
                   "--seq-len", "32", "--out", str(out)])
    assert rc == 0
    assert "accuracy" in capsys.readouterr().out
    report = json.loads((out / "eval_report.json").read_text())
    assert report["task"] == "rte"
    assert report["examples"] == 8
    assert 0.0 <= report["score"] <= 1.0


def test_eval_needs_task_head(ws, tmp_path, capsys):
    rc = cli.main(["eval", "--task", "rte",
                   "--checkpoint", str(ws["pre"] / "model.ckpt"),  # encoder only
                   "--tokenizer", str(ws["vocab"]), "--data", str(ws["test_tsv"]),
                   "--out", str(tmp_path)])
    assert rc == 2
    assert "head" in capsys.readouterr().err


def test_sweep_quick_cli(ws, tmp_path, capsys):
    out = tmp_path / "sweep"
    rc = cli.main(["sweep", "--task", "rte",
                   "--checkpoint", str(ws["pre"] / "model.ckpt"),
                   "--tokenizer", str(ws["vocab"]),
                   "--train", str(ws["train_tsv"]), "--test", str(ws["test_tsv"]),
                   "--grid", "quick", "--epochs", "1", "--batch-size", "8",
                   "--seq-len", "32", "--out", str(out)])
    assert rc == 0
    assert "3 runs" in capsys.readouterr().out
    report = json.loads((out / "metrics_report.json").read_text())
    assert len(report["runs"]) == 3
    assert len(report["configs"]) == 1
    assert report["n_failed"] == 0
    assert report["selected_config"] is not None
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "model,rte"
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "sweep"
    assert man["config"]["grid"] == "quick"


def test_sweep_rejects_unknown_grid(ws, tmp_path):
    rc = cli.main(["sweep", "--task", "rte",
                   "--checkpoint", str(ws["pre"] / "model.ckpt"),
                   "--tokenizer", str(ws["vocab"]),
                   "--train", str(ws["train_tsv"]), "--test", str(ws["test_tsv"]),
                   "--grid", "weird", "--out", str(tmp_path)])
    assert rc == 1


# ---------------------------------------------------------------------------
# report command and loss-curve rendering


def test_report_from_loss_log(ws, tmp_path):
    out = tmp_path / "rep"
    rc = cli.main(["report", "--loss-log", str(ws["pre"] / "loss_log.csv"),
                   "--out", str(out)])
    assert rc == 0
    assert (out / "loss_curve.svg").exists()
    lines = (out / "loss_curve.csv").read_text().splitlines()
    assert len(lines) == 9
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "report"


def test_report_from_metrics(tmp_path):
    metrics = tmp_path / "metrics_report.json"
    metrics.write_text(json.dumps({"task": "rte", "reported_test_score": 0.625}),
                       encoding="utf-8")
    out = tmp_path / "rep"
    assert cli.main(["report", "--metrics", str(metrics), "--out", str(out)]) == 0
    assert (out / "summary.csv").read_text() == "model,rte\nencoder,0.625\n"

    metrics.write_text(json.dumps({"task": "rte", "reported_test_score": None}),
                       encoding="utf-8")
    assert cli.main(["report", "--metrics", str(metrics), "--out", str(out)]) == 0
    assert (out / "summary.csv").read_text() == "model,rte\nencoder,\n"


def test_report_requires_some_input(tmp_path, capsys):
    assert cli.main(["report", "--out", str(tmp_path)]) == 1
    assert "needs" in capsys.readouterr().err


def make_log(rows):
    log = LossLog()
    for step, loss, ema in rows:
        log.entries.append(LossLogEntry(step=step, epoch=0, lr=1e-4,
                                        loss=loss, ema_loss=ema))
    return log


def test_emit_loss_curve_csv(tmp_path):
    log = make_log([(1, 4.0, 4.0), (2, 3.0, 3.95), (3, 2.0, 3.8525)])
    csv_path = tmp_path / "curve.csv"
    cli.emit_loss_curve(log, csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "step,loss,ema_loss"
    assert lines[1] == "1,4.0,4.0"
    assert len(lines) == 4
    # values survive a float round trip exactly
    assert float(lines[3].split(",")[2]) == 3.8525


def test_emit_loss_curve_rejects_empty(tmp_path):
    with pytest.raises(DataError, match="empty"):
        cli.emit_loss_curve(LossLog(), tmp_path / "curve.csv")


def test_render_loss_svg_monotone():
    log = make_log([(0, 4.0, 4.0), (10, 3.0, 3.0), (20, 2.0, 2.0), (30, 1.0, 1.0)])
    svg = cli.render_loss_svg(log)
    pts = re.search(r'points="([^"]+)"', svg).group(1).split()
    xs = [float(p.split(",")[0]) for p in pts]
    ys = [float(p.split(",")[1]) for p in pts]
    assert len(pts) == 4
    assert xs == sorted(xs) and len(set(xs)) == 4
    # loss falls, so the screen-space curve descends toward larger y
    assert ys == sorted(ys) and len(set(ys)) == 4
    assert ">0<" in svg and ">30<" in svg  # step-axis labels


def test_render_loss_svg_flat_series():
    svg = cli.render_loss_svg(make_log([(0, 1.0, 1.0), (5, 1.0, 1.0)]))
    assert "<svg" in svg  # constant series must not divide by zero


# ---------------------------------------------------------------------------
# threads resolution


def test_threads_resolution(monkeypatch):
    ns = argparse.Namespace(threads=2)
    assert cli._threads(ns, {"threads": 4}) == 2
    ns = argparse.Namespace(threads=None)
    assert cli._threads(ns, {"threads": 4}) == 4
    monkeypatch.setenv("LUSOFORGE_THREADS", "3")
    assert cli._threads(ns, {}) == 3
    monkeypatch.delenv("LUSOFORGE_THREADS")
    assert cli._threads(ns, {}) == 1


def test_filter_respects_threads_env(ws, tmp_path, monkeypatch):
    monkeypatch.setenv("LUSOFORGE_THREADS", "2")
    out = tmp_path / "par"
    assert cli.main(["corpus", "filter", "--input", str(ws["corpus"]),
                     "--out", str(out)]) == 0
    assert (out / "filtered.jsonl").read_bytes() == ws["filtered"].read_bytes()
