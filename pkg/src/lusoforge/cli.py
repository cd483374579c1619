"""Command-line entry point: corpus curation, tokenizer training, MLM
pre-training, fine-tuning, grid sweeps, evaluation, and report rendering.

Every field of every run config resolves as CLI flag > config file >
built-in default, and each resolution is logged. Every run writes a
RunManifest next to its outputs. Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from lusoforge import __version__
from lusoforge import corpus as corpus_mod
from lusoforge import finetune as ft
from lusoforge import pretrain as pt
from lusoforge import tokenizer as tok_mod
from lusoforge.checkpoint import load_checkpoint, params_from_arrays, save_checkpoint
from lusoforge.errors import DataError, NumericalError, UsageError
from lusoforge.manifest import RunManifest

log = logging.getLogger("lusoforge")


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the contract here is 1
    def error(self, message):
        raise UsageError(message)


def _add_common(p: _Parser):
    p.add_argument("--config", type=Path, default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    p.add_argument("--out", type=Path, default=None, help="output directory (default .)")
    p.add_argument("--threads", type=int, default=None,
                   help="internal parallelism (default $LUSOFORGE_THREADS or 1)")


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read config file {path}: {e}") from e
    if not isinstance(obj, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    return obj


def _resolve_fields(args, file_cfg: dict, defaults: dict) -> dict:
    """CLI flag > config file > default, logged per field."""
    resolved = {}
    for name, default in defaults.items():
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            resolved[name] = cli_val
            source = "cli"
        elif name in file_cfg:
            resolved[name] = file_cfg[name]
            source = "config-file"
        else:
            resolved[name] = default
            source = "default"
        log.info("config %s=%r (%s)", name, resolved[name], source)
    return resolved


def _threads(args, file_cfg: dict) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    if "threads" in file_cfg:
        return int(file_cfg["threads"])
    env = os.environ.get("LUSOFORGE_THREADS")
    return int(env) if env else 1


def _out_dir(args) -> Path:
    out = args.out if args.out is not None else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, file_cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in file_cfg:
        return int(file_cfg["seed"])
    return 0


def _manifest(command: str, config: dict, seed: int) -> RunManifest:
    return RunManifest(command=command, config=config, seed=seed, code_version=__version__)


# ---------------------------------------------------------------------------
# loss-curve rendering


def emit_loss_curve(losslog: pt.LossLog, csv_path: Path, svg_path: Path | None = None):
    """Plot-ready CSV (step, loss, ema_loss) and an optional monochrome SVG
    of the EMA series."""
    if not losslog.entries:
        raise DataError("loss log is empty; nothing to plot")
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        f.write("step,loss,ema_loss\n")
        for e in losslog.entries:
            f.write(f"{e.step},{e.loss!r},{e.ema_loss!r}\n")
    if svg_path is not None:
        Path(svg_path).write_text(render_loss_svg(losslog), encoding="utf-8")


def render_loss_svg(losslog: pt.LossLog, width: int = 640, height: int = 360) -> str:
    steps = [e.step for e in losslog.entries]
    emas = [e.ema_loss for e in losslog.entries]
    ml, mr, mt, mb = 55, 15, 15, 40
    x0, x1 = min(steps), max(steps)
    y0, y1 = min(emas), max(emas)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1e-9
    iw, ih = width - ml - mr, height - mt - mb

    def sx(s):
        return ml + iw * (s - x0) / (x1 - x0)

    def sy(v):
        return mt + ih * (1.0 - (v - y0) / (y1 - y0))

    pts = " ".join(f"{sx(s):.2f},{sy(v):.2f}" for s, v in zip(steps, emas))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height-mb}" stroke="#444"/>\n'
        f'<line x1="{ml}" y1="{height-mb}" x2="{width-mr}" y2="{height-mb}" stroke="#444"/>\n'
        f'<text x="{ml-6}" y="{mt+5}" text-anchor="end" font-size="11" fill="#444">{y1:.3g}</text>\n'
        f'<text x="{ml-6}" y="{height-mb}" text-anchor="end" font-size="11" fill="#444">{y0:.3g}</text>\n'
        f'<text x="{ml}" y="{height-mb+16}" text-anchor="middle" font-size="11" fill="#444">{x0}</text>\n'
        f'<text x="{width-mr}" y="{height-mb+16}" text-anchor="middle" font-size="11" fill="#444">{x1}</text>\n'
        f'<text x="{(ml+width-mr)//2}" y="{height-8}" text-anchor="middle" font-size="12" fill="#444">step</text>\n'
        f'<polyline fill="none" stroke="#222" stroke-width="1.5" points="{pts}"/>\n'
        "</svg>\n"
    )


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_corpus_filter(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _seed(args, file_cfg)
    out = _out_dir(args)
    fields = _resolve_fields(args, file_cfg, {
        "country_code": None, "deduplicate": True, "near_duplicates": False,
        "near_dup_jaccard": 0.8, "near_dup_ngram": 5,
    })
    thresholds = corpus_mod.QualityThresholds(**file_cfg.get("thresholds", {}))
    config = corpus_mod.PipelineConfig(
        country_code=fields["country_code"],
        deduplicate=bool(fields["deduplicate"]),
        near_duplicates=bool(fields["near_duplicates"]),
        near_dup_jaccard=float(fields["near_dup_jaccard"]),
        near_dup_ngram=int(fields["near_dup_ngram"]),
        thresholds=thresholds,
        threads=_threads(args, file_cfg),
    )
    docs = corpus_mod.read_jsonl(args.input)
    kept, report = corpus_mod.run_pipeline(docs, config)
    man = _manifest("corpus filter", {**fields, "thresholds": vars(thresholds)}, seed)
    man.add_input(args.input)
    filtered_path = out / "filtered.jsonl"
    report_path = out / "filter_report.json"
    corpus_mod.write_jsonl(kept, filtered_path)
    report_path.write_text(report.to_json(), encoding="utf-8")
    man.add_output(filtered_path)
    man.add_output(report_path)
    man.write(out / "manifest.json")
    print(f"kept {report.kept_count}/{report.input_count} documents -> {filtered_path}")
    return 0


def _cmd_corpus_stats(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _seed(args, file_cfg)
    out = _out_dir(args)
    docs = corpus_mod.read_jsonl(args.input)
    tokenizer = tok_mod.load_tokenizer(args.tokenizer) if args.tokenizer else None
    report = corpus_mod.corpus_stats(docs, tokenizer)
    path = out / "stats_report.json"
    path.write_text(report.to_json(), encoding="utf-8")
    man = _manifest("corpus stats", {"tokenizer": str(args.tokenizer) if args.tokenizer else None}, seed)
    man.add_input(args.input)
    man.add_output(path)
    man.write(out / "manifest.json")
    for src, row in report.sources.items():
        print(f"{src}: {row['documents']} docs ({row['doc_proportion']:.2%}), "
              f"{row['tokens']} tokens ({row['token_proportion']:.2%})")
    return 0


def _cmd_tokenizer_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _seed(args, file_cfg)
    out = _out_dir(args)
    fields = _resolve_fields(args, file_cfg, {"vocab_size": 8192})
    docs = corpus_mod.read_jsonl(args.input)
    model = tok_mod.train_tokenizer(docs, int(fields["vocab_size"]), seed=seed)
    vocab_path = out / "vocab.json"
    tok_mod.save_tokenizer(model, vocab_path)
    man = _manifest("tokenizer train", fields, seed)
    man.add_input(args.input)
    man.add_output(vocab_path)
    man.write(out / "manifest.json")
    print(f"trained vocabulary of {model.vocab_size} tokens -> {vocab_path}")
    return 0


_PRETRAIN_DEFAULTS = {
    "preset": "tiny", "seq_len": 128, "micro_batch_size": 8, "accumulation_steps": 4,
    "peak_lr": 5e-4, "warmup_steps": 100, "total_steps": 2000, "epochs": 0,
    "mask_rate": 0.15, "dropout_rate": None, "weight_decay": 0.01,
    "checkpoint_every": 500, "init_checkpoint": None,
}


def _cmd_pretrain(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _seed(args, file_cfg)
    out = _out_dir(args)
    fields = _resolve_fields(args, file_cfg, dict(_PRETRAIN_DEFAULTS))
    config = pt.TrainRunConfig(seed=seed, out_dir=str(out), **fields)
    docs = corpus_mod.read_jsonl(args.input)
    tokenizer = tok_mod.load_tokenizer(args.tokenizer)
    model, losslog = pt.train(config, docs, tokenizer)
    emit_loss_curve(losslog, out / "loss_curve.csv", out / "loss_curve.svg")
    man = _manifest("pretrain", {**fields, "seed": seed}, seed)
    man.add_input(args.input)
    man.add_input(args.tokenizer)
    for name in ("model.ckpt", "loss_log.csv", "loss_curve.csv", "loss_curve.svg"):
        man.add_output(out / name)
    man.write(out / "manifest.json")
    final = losslog.entries[-1]
    print(f"trained {final.step} steps; final loss {final.loss:.4f} "
          f"(ema {final.ema_loss:.4f}) -> {out / 'model.ckpt'}")
    return 0


def _task_spec(name: str) -> ft.TaskSpec:
    if name not in ft.TASKS:
        raise UsageError(f"unknown task {name!r}; have {sorted(ft.TASKS)}")
    return ft.TASKS[name]


def _load_split(path, spec, split):
    return ft.read_task_tsv(path, spec, split=split)


def _cmd_finetune(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _seed(args, file_cfg)
    out = _out_dir(args)
    spec = _task_spec(args.task)
    fields = _resolve_fields(args, file_cfg, {
        "dropout": 0.1, "lr": 1e-5, "precision": "fp32",
        "epochs": 5, "batch_size": 16, "seq_len": 128, "dev_fraction": 0.1,
    })
    gp = ft.GridPoint(dropout=float(fields["dropout"]), lr=float(fields["lr"]),
                      precision=str(fields["precision"]), seed=seed)
    enc_config, arrays, _ = load_checkpoint(args.checkpoint)
    tokenizer = tok_mod.load_tokenizer(args.tokenizer)
    train_ex = _load_split(args.train, spec, "train")
    if args.dev:
        dev_ex = _load_split(args.dev, spec, "dev")
    else:
        train_ex, dev_ex = ft.split_train_dev(train_ex, float(fields["dev_fraction"]), seed)
    model = ft.attach_head(enc_config, params_from_arrays(arrays), spec.head_type,
                           dropout=gp.dropout, seed=gp.seed)
    result = ft.finetune(model, train_ex, dev_ex, gp, spec, tokenizer,
                         seq_len=int(fields["seq_len"]), epochs=int(fields["epochs"]),
                         batch_size=int(fields["batch_size"]))
    ckpt_path = out / "model_finetuned.ckpt"
    save_checkpoint(ckpt_path, model.config, model.params,
                    meta={"task": spec.name, "head_type": spec.head_type,
                          "best_epoch": result.best_epoch})
    report = {
        "task": spec.name, "metric": spec.metric,
        "grid_point": {"dropout": gp.dropout, "lr": gp.lr, "precision": gp.precision,
                       "seed": gp.seed},
        "dev_score": result.dev_score, "best_epoch": result.best_epoch,
        "epoch_scores": result.epoch_scores,
    }
    report_path = out / "finetune_report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    man = _manifest("finetune", {**fields, "task": spec.name}, seed)
    for p in (args.checkpoint, args.tokenizer, args.train):
        man.add_input(p)
    if args.dev:
        man.add_input(args.dev)
    man.add_output(ckpt_path)
    man.add_output(report_path)
    man.write(out / "manifest.json")
    print(f"dev {spec.metric} {result.dev_score:.4f} (best epoch {result.best_epoch}) "
          f"-> {report_path}")
    return 0


def _cmd_sweep(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _seed(args, file_cfg)
    out = _out_dir(args)
    spec = _task_spec(args.task)
    fields = _resolve_fields(args, file_cfg, {
        "grid": "full", "epochs": 5, "batch_size": 16, "seq_len": 128, "dev_fraction": 0.1,
    })
    enc_config, arrays, _ = load_checkpoint(args.checkpoint)
    tokenizer = tok_mod.load_tokenizer(args.tokenizer)
    train_ex = _load_split(args.train, spec, "train")
    if args.dev:
        dev_ex = _load_split(args.dev, spec, "dev")
    else:
        train_ex, dev_ex = ft.split_train_dev(train_ex, float(fields["dev_fraction"]), seed)
    test_ex = _load_split(args.test, spec, "test")
    if fields["grid"] == "full":
        grid = ft.full_grid()
    elif fields["grid"] == "quick":
        grid = [ft.GridPoint(0.0, 1e-5, "fp32", s) for s in ft.GRID_SEEDS]
    else:
        raise UsageError(f"--grid must be 'full' or 'quick', got {fields['grid']!r}")
    report = ft.run_grid(enc_config, params_from_arrays(arrays), spec, tokenizer,
                         train_ex, dev_ex, test_ex, grid=grid,
                         seq_len=int(fields["seq_len"]), epochs=int(fields["epochs"]),
                         batch_size=int(fields["batch_size"]),
                         threads=_threads(args, file_cfg))
    report_path = out / "metrics_report.json"
    report_path.write_text(report.to_json(), encoding="utf-8")
    summary_path = out / "summary.csv"
    summary_path.write_text(ft.report_csv_summary([report]), encoding="utf-8")
    man = _manifest("sweep", {**fields, "task": spec.name}, seed)
    for p in (args.checkpoint, args.tokenizer, args.train, args.test):
        man.add_input(p)
    if args.dev:
        man.add_input(args.dev)
    man.add_output(report_path)
    man.add_output(summary_path)
    man.write(out / "manifest.json")
    sel = report.selected_config
    print(f"{len(report.runs)} runs, {len(report.configs)} configs, "
          f"{report.n_failed} failed; selected {sel}; "
          f"test {spec.metric} {report.reported_test_score}")
    return 0


def _cmd_eval(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _seed(args, file_cfg)
    out = _out_dir(args)
    spec = _task_spec(args.task)
    enc_config, arrays, meta = load_checkpoint(args.checkpoint)
    tokenizer = tok_mod.load_tokenizer(args.tokenizer)
    examples = _load_split(args.data, spec, "test")
    model = ft.load_task_model(enc_config, arrays, meta.get("head_type", spec.head_type))
    encoded, labels = ft._encode_examples(examples, tokenizer, args.seq_len or 128)
    preds = ft.predict(model, encoded, label_range=spec.label_range)
    if spec.head_type == "regression":
        score = ft.metric_fn(spec)(list(preds), list(labels))
    else:
        score = ft.metric_fn(spec)([int(p) for p in preds], [int(g) for g in labels])
    report = {"task": spec.name, "metric": spec.metric, "score": float(score),
              "examples": len(examples)}
    path = out / "eval_report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    man = _manifest("eval", {"task": spec.name}, seed)
    man.add_input(args.checkpoint)
    man.add_input(args.data)
    man.add_output(path)
    man.write(out / "manifest.json")
    print(f"{spec.metric} {score:.4f} over {len(examples)} examples -> {path}")
    return 0


def _cmd_report(args) -> int:
    file_cfg = _load_config_file(args.config)
    seed = _seed(args, file_cfg)
    out = _out_dir(args)
    if not args.loss_log and not args.metrics:
        raise UsageError("report needs --loss-log and/or --metrics")
    man = _manifest("report", {}, seed)
    if args.loss_log:
        losslog = pt.LossLog.from_csv(args.loss_log)
        emit_loss_curve(losslog, out / "loss_curve.csv", out / "loss_curve.svg")
        man.add_input(args.loss_log)
        man.add_output(out / "loss_curve.csv")
        man.add_output(out / "loss_curve.svg")
        print(f"rendered {len(losslog)} log records -> {out / 'loss_curve.svg'}")
    if args.metrics:
        try:
            payload = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read metrics report {args.metrics}: {e}") from e
        task = payload.get("task", "task")
        value = payload.get("reported_test_score")
        text = f"model,{task}\nencoder,{'' if value is None else repr(value)}\n"
        (out / "summary.csv").write_text(text, encoding="utf-8")
        man.add_input(args.metrics)
        man.add_output(out / "summary.csv")
        print(f"summary -> {out / 'summary.csv'}")
    man.write(out / "manifest.json")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> _Parser:
    parser = _Parser(prog="lusoforge",
                     description="desk-scale encoder lab: corpus, tokenizer, "
                                 "pre-training, fine-tuning, evaluation")
    sub = parser.add_subparsers(dest="command")

    corpus = sub.add_parser("corpus", help="corpus curation")
    corpus_sub = corpus.add_subparsers(dest="subcommand")
    cf = corpus_sub.add_parser("filter", help="run the filter pipeline")
    cf.add_argument("--input", type=Path, required=True, help="input JSONL")
    cf.add_argument("--cc", dest="country_code", default=None,
                    help="country-code TLD to keep (e.g. pt)")
    cf.add_argument("--dedup", dest="deduplicate", action="store_true", default=None)
    cf.add_argument("--no-dedup", dest="deduplicate", action="store_false")
    cf.add_argument("--near-dups", dest="near_duplicates", action="store_true", default=None)
    _add_common(cf)
    cf.set_defaults(handler=_cmd_corpus_filter)

    cs = corpus_sub.add_parser("stats", help="composition statistics")
    cs.add_argument("--input", type=Path, required=True)
    cs.add_argument("--tokenizer", type=Path, default=None,
                    help="count subwords with this vocabulary instead of whitespace tokens")
    _add_common(cs)
    cs.set_defaults(handler=_cmd_corpus_stats)

    tk = sub.add_parser("tokenizer", help="subword tokenizer")
    tk_sub = tk.add_subparsers(dest="subcommand")
    tt = tk_sub.add_parser("train", help="learn a vocabulary")
    tt.add_argument("--input", type=Path, required=True, help="input JSONL")
    tt.add_argument("--vocab-size", dest="vocab_size", type=int, default=None)
    _add_common(tt)
    tt.set_defaults(handler=_cmd_tokenizer_train)

    pr = sub.add_parser("pretrain", help="masked-language-model pre-training")
    pr.add_argument("--input", type=Path, required=True, help="corpus JSONL")
    pr.add_argument("--tokenizer", type=Path, required=True, help="vocab.json")
    pr.add_argument("--preset", default=None)
    pr.add_argument("--seq-len", dest="seq_len", type=int, default=None)
    pr.add_argument("--micro-batch-size", dest="micro_batch_size", type=int, default=None)
    pr.add_argument("--accumulation-steps", dest="accumulation_steps", type=int, default=None)
    pr.add_argument("--peak-lr", dest="peak_lr", type=float, default=None)
    pr.add_argument("--warmup-steps", dest="warmup_steps", type=int, default=None)
    pr.add_argument("--total-steps", dest="total_steps", type=int, default=None)
    pr.add_argument("--epochs", type=int, default=None)
    pr.add_argument("--mask-rate", dest="mask_rate", type=float, default=None)
    pr.add_argument("--dropout-rate", dest="dropout_rate", type=float, default=None)
    pr.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    pr.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    pr.add_argument("--init-checkpoint", dest="init_checkpoint", default=None)
    _add_common(pr)
    pr.set_defaults(handler=_cmd_pretrain)

    fe = sub.add_parser("finetune", help="fine-tune one grid point")
    fe.add_argument("--task", required=True)
    fe.add_argument("--checkpoint", type=Path, required=True)
    fe.add_argument("--tokenizer", type=Path, required=True)
    fe.add_argument("--train", type=Path, required=True, help="train split TSV")
    fe.add_argument("--dev", type=Path, default=None,
                    help="dev split TSV (default: 10%% carved from train)")
    fe.add_argument("--dropout", type=float, default=None)
    fe.add_argument("--lr", type=float, default=None)
    fe.add_argument("--precision", choices=("fp32", "fp16"), default=None)
    fe.add_argument("--epochs", type=int, default=None)
    fe.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    fe.add_argument("--seq-len", dest="seq_len", type=int, default=None)
    _add_common(fe)
    fe.set_defaults(handler=_cmd_finetune)

    sw = sub.add_parser("sweep", help="hyperparameter grid over a task")
    sw.add_argument("--task", required=True)
    sw.add_argument("--checkpoint", type=Path, required=True)
    sw.add_argument("--tokenizer", type=Path, required=True)
    sw.add_argument("--train", type=Path, required=True)
    sw.add_argument("--dev", type=Path, default=None)
    sw.add_argument("--test", type=Path, required=True)
    sw.add_argument("--grid", choices=("full", "quick"), default=None)
    sw.add_argument("--epochs", type=int, default=None)
    sw.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sw.add_argument("--seq-len", dest="seq_len", type=int, default=None)
    _add_common(sw)
    sw.set_defaults(handler=_cmd_sweep)

    ev = sub.add_parser("eval", help="evaluate a fine-tuned checkpoint")
    ev.add_argument("--task", required=True)
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--tokenizer", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True, help="evaluation TSV")
    ev.add_argument("--seq-len", dest="seq_len", type=int, default=None)
    _add_common(ev)
    ev.set_defaults(handler=_cmd_eval)

    rp = sub.add_parser("report", help="render artifacts from existing logs")
    rp.add_argument("--loss-log", dest="loss_log", type=Path, default=None)
    rp.add_argument("--metrics", type=Path, default=None)
    _add_common(rp)
    rp.set_defaults(handler=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s",
                        stream=sys.stderr)
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return 1
        args = parser.parse_args(argv)
        handler = getattr(args, "handler", None)
        if handler is None:
            parser.print_usage(sys.stderr)
            return 1
        return handler(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
