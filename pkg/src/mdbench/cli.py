"""Command-line entry points.

Configuration precedence, highest first: command-line flags, the JSON
config file given with --config (flat dotted keys like "train.epochs"),
the MDBENCH_SEED environment variable (seed only), then built-in defaults.
Every artifact a command writes echoes the fully resolved configuration,
so runs can be reproduced from their outputs alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .annotation import RevisionLog, diff_annotations, merge_relabel, resolve
from .attention import cls_attention, export_heatmap
from .data import (
    Dataset,
    DatasetFormat,
    filter_uncertain,
    load_dataset,
    save_dataset,
    to_sequence_labels,
)
from .encoder import (
    EncoderConfig,
    checkpoint_extra,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .metrics import (
    averaging_for,
    confusion,
    cross_validate,
    f1_binary,
    f1_macro,
    group_by_aspect,
    render_f1_grid,
)
from .service import make_session, serve
from .tasks import TaskKind, TaskSetting, encode_for_task, predict_batch, write_predictions
from .tokenization import Vocab, build_vocab, vocab_from_text, vocab_to_text
from .training import PAPER_EPOCHS, TrainConfig, fit, grad_check_all

SEED_ENV = "MDBENCH_SEED"

_TRAIN_KEYS = {"epochs", "batch_size", "learning_rate", "weight_decay", "max_len"}
_ENCODER_KEYS = {"layers", "heads", "hidden", "ff_dim", "dropout_rate"}


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig
    encoder: EncoderConfig
    seed: int
    vocab_merges: int

    def to_dict(self) -> dict:
        return {
            "train": asdict(self.train),
            "encoder": asdict(self.encoder),
            "seed": self.seed,
            "vocab_merges": self.vocab_merges,
        }


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise SystemExit(f"{path}: config must be a JSON object of dotted keys")
    known = (
        {f"train.{k}" for k in _TRAIN_KEYS}
        | {f"encoder.{k}" for k in _ENCODER_KEYS}
        | {"seed", "vocab.merges"}
    )
    unknown = sorted(set(payload) - known)
    if unknown:
        raise SystemExit(f"{path}: unknown config keys {unknown}")
    return payload


def resolve_run_config(args: argparse.Namespace, setting: TaskSetting | None) -> RunConfig:
    file_cfg = _load_config_file(getattr(args, "config", None))

    def picked(flag_name: str, file_key: str, fallback):
        flag = getattr(args, flag_name, None)
        if flag is not None:
            return flag
        if file_key in file_cfg:
            return file_cfg[file_key]
        return fallback

    seed = getattr(args, "seed", None)
    if seed is None:
        seed = file_cfg.get("seed")
    if seed is None:
        env = os.environ.get(SEED_ENV)
        seed = int(env) if env else 0
    seed = int(seed)

    default_epochs = PAPER_EPOCHS[setting] if setting is not None else 20
    train = TrainConfig(
        epochs=int(picked("epochs", "train.epochs", default_epochs)),
        batch_size=int(picked("batch_size", "train.batch_size", 16)),
        learning_rate=float(picked("lr", "train.learning_rate", 1e-4)),
        weight_decay=float(picked("weight_decay", "train.weight_decay", 0.01)),
        max_len=int(picked("max_len", "train.max_len", 64)),
        seed=seed,
    )
    desk = EncoderConfig.desk()
    encoder = EncoderConfig(
        layers=int(file_cfg.get("encoder.layers", desk.layers)),
        heads=int(file_cfg.get("encoder.heads", desk.heads)),
        hidden=int(file_cfg.get("encoder.hidden", desk.hidden)),
        ff_dim=int(file_cfg.get("encoder.ff_dim", desk.ff_dim)),
        dropout_rate=float(file_cfg.get("encoder.dropout_rate", desk.dropout_rate)),
        max_len=train.max_len,
        vocab_size=desk.vocab_size,
        seed=seed,
    )
    merges = int(picked("vocab_merges", "vocab.merges", 400))
    return RunConfig(train=train, encoder=encoder, seed=seed, vocab_merges=merges)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out}")
    else:
        print(text)


def _load_for_task(args) -> Dataset:
    dataset = load_dataset(args.dataset, args.format)
    return filter_uncertain(dataset)


def _task_for(args, dataset: Dataset) -> TaskKind:
    return TaskKind.for_scheme(TaskSetting(args.task), dataset.scheme)


# --- subcommands -------------------------------------------------------------


def cmd_train(args) -> int:
    dataset = _load_for_task(args)
    task = _task_for(args, dataset)
    run = resolve_run_config(args, task.setting)
    vocab = build_vocab(
        (" ".join(r.words) for r in dataset.records), merges=run.vocab_merges
    )
    encoder_cfg = replace(run.encoder, vocab_size=len(vocab))
    model = init_model(encoder_cfg, num_classes=task.num_classes)
    model, report = fit(model, task, dataset.records, run.train, vocab)
    if args.checkpoint:
        save_checkpoint(
            model,
            args.checkpoint,
            extras={
                "vocab.txt": vocab_to_text(vocab),
                "run_config.json": json.dumps(run.to_dict(), indent=2, sort_keys=True),
            },
        )
        print(f"checkpoint: {args.checkpoint}")
    payload = {
        "dataset": dataset.name,
        "records": len(dataset),
        "task": task.setting.value,
        "config": run.to_dict(),
        "train_report": report.to_dict(),
    }
    _emit(payload, args.out)
    return 0


def _vocab_for_checkpoint(args) -> Vocab:
    text = checkpoint_extra(args.checkpoint, "vocab.txt")
    if text is None:
        raise SystemExit(
            f"{args.checkpoint}: no embedded vocabulary; re-train or pass a checkpoint "
            "written by this tool"
        )
    return vocab_from_text(text)


def cmd_eval(args) -> int:
    dataset = _load_for_task(args)
    task = _task_for(args, dataset)
    model = load_checkpoint(args.checkpoint)
    vocab = _vocab_for_checkpoint(args)
    max_len = args.max_len or model.cfg.max_len

    records = list(dataset.records)
    encodings = [encode_for_task(task, vocab, r, max_len) for r in records]
    predictions = []
    for start in range(0, len(records), 64):
        predictions.extend(
            predict_batch(model, task, encodings[start : start + 64], mask_id=vocab.mask_id)
        )
    if task.setting is TaskSetting.SEQUENCE_LABELING:
        golds = [to_sequence_labels(r) for r in records]
        flat_golds = [g for seq in golds for g in seq]
        flat_preds = [p for pred in predictions for p in pred.label]
    else:
        golds = [r.label.value for r in records]
        flat_golds = golds
        flat_preds = [int(p.label) for p in predictions]
    cm = confusion(flat_golds, flat_preds, task.num_classes)
    averaging = averaging_for(task)
    value = f1_binary(cm) if averaging == "binary" else f1_macro(cm)
    if args.predictions:
        write_predictions(args.predictions, task, [r.id for r in records], golds, predictions)
        print(f"predictions: {args.predictions}")
    _emit(
        {
            "dataset": dataset.name,
            "task": task.setting.value,
            "records": len(records),
            "f1": value,
            "averaging": averaging,
            "accuracy": cm.accuracy(),
            "confusion": cm.to_dict()["counts"],
        },
        args.out,
    )
    return 0


def cmd_cv(args) -> int:
    dataset = _load_for_task(args)
    task = _task_for(args, dataset)
    run = resolve_run_config(args, task.setting)
    vocab = build_vocab(
        (" ".join(r.words) for r in dataset.records), merges=run.vocab_merges
    )
    report = cross_validate(
        dataset,
        task,
        k=args.k,
        seed=run.seed,
        train_cfg=run.train,
        encoder_cfg=run.encoder,
        vocab=vocab,
        progress=lambda f, v: print(f"fold {f}: f1={v:.4f}", file=sys.stderr),
    )
    _emit(report.to_dict(), args.out)
    print(render_f1_grid([report]), end="")
    return 0


def cmd_heatmap(args) -> int:
    dataset = _load_for_task(args)
    task = _task_for(args, dataset)
    model = load_checkpoint(args.checkpoint)
    vocab = _vocab_for_checkpoint(args)
    max_len = args.max_len or model.cfg.max_len
    record = dataset.by_id(args.record)
    profile = cls_attention(model, task, vocab, record, max_len)
    json_path, svg_path = export_heatmap(profile, args.out or ".")
    print(f"wrote {json_path}")
    print(f"wrote {svg_path}")
    return 0


def cmd_gradcheck(args) -> int:
    results = grad_check_all(seeds=range(args.seeds), eps=args.eps)
    worst = 0.0
    for block, err in results.items():
        status = "ok" if err < args.threshold else "FAIL"
        print(f"{block:16s} max_rel_err={err:.3e}  [{status}]")
        worst = max(worst, err)
    if worst >= args.threshold:
        print(f"worst error {worst:.3e} exceeds threshold {args.threshold:g}")
        return 1
    return 0


def cmd_dataset_inspect(args) -> int:
    dataset = load_dataset(args.dataset, args.format)
    kept = filter_uncertain(dataset)
    histogram = {name: 0 for name in dataset.scheme.class_names}
    for r in kept.records:
        histogram[dataset.scheme.class_names[r.label.value]] += 1
    summary = group_by_aspect(dataset)
    payload = {
        "dataset": dataset.name,
        "scheme": dataset.scheme.value,
        "records": len(dataset),
        "uncertain": len(dataset) - len(kept),
        "label_histogram": histogram,
        "aspect_groups": {
            "total_groups": summary.total_groups,
            "all_literal": summary.all_literal,
            "all_metaphorical": summary.all_metaphorical,
            "mixed": summary.mixed,
        },
    }
    _emit(payload, args.out)
    return 0


def _annotation_inputs(args):
    original = load_dataset(args.dataset, args.format)
    revised = load_dataset(args.revised, args.format)
    return original, revised


def cmd_annotate_diff(args) -> int:
    original, revised = _annotation_inputs(args)
    report = diff_annotations(original, revised)
    payload = report.to_dict()
    if not args.full:
        payload.pop("changes")
    _emit(payload, args.out)
    print(f"{report.changed} of {report.total} labels changed ({report.percent})")
    return 0


def cmd_annotate_serve(args) -> int:
    original, revised = _annotation_inputs(args)
    session = make_session(
        original, revised, args.log, sample_size=args.sample, seed=args.seed or 0
    )
    static = args.static
    if static is None:
        bundled = Path(__file__).parent / "ui"
        static = bundled if bundled.is_dir() else None
    server = serve(session, port=args.port, host=args.host, static_dir=static)
    host, port = server.server_address[:2]
    print(f"annotation service listening on http://{host}:{port}/ "
          f"({len(session.sample)} records up for review)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_annotate_stats(args) -> int:
    original, revised = _annotation_inputs(args)
    session = make_session(
        original, revised, args.log, sample_size=args.sample, seed=args.seed or 0
    )
    _emit(session.stats(), args.out)
    return 0


def cmd_annotate_merge(args) -> int:
    original = load_dataset(args.dataset, args.format)
    log = RevisionLog(args.log)
    originals = {r.id: r.label.value for r in original.records}
    decisions = resolve(log.votes(), originals)
    changed = {rid: v for rid, v in decisions.items() if originals[rid] != v}
    merged = merge_relabel(original, decisions)
    for rid, value in sorted(changed.items()):
        log.append(rid, annotator_id="merge", action="merge", label=value)
    save_dataset(merged, args.out)
    print(
        f"merged {len(changed)} of {len(decisions)} voted records into {args.out} "
        f"({len(merged)} records)"
    )
    return 0


# --- parser ------------------------------------------------------------------


def _add_common_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", required=True,
                   choices=[t.value for t in TaskSetting])
    p.add_argument("--config", help="JSON config file with dotted keys")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--vocab-merges", type=int, default=None)


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="TSV dataset path")
    p.add_argument("--format", required=True,
                   choices=[f.value for f in DatasetFormat])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdbench",
        description="Metaphor detection benchmark: train, evaluate and "
                    "re-annotate figurative-language datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model on a full dataset")
    _add_dataset_flags(p)
    _add_common_model_flags(p)
    p.add_argument("--checkpoint", help="write the trained model here (zip)")
    p.add_argument("--out", help="write the training report JSON here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    _add_dataset_flags(p)
    p.add_argument("--task", required=True, choices=[t.value for t in TaskSetting])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--predictions", help="write per-record predictions TSV here")
    p.add_argument("--out", help="write metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    _add_dataset_flags(p)
    _add_common_model_flags(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", help="write the CV report JSON here")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("heatmap", help="export word-level attention for one record")
    _add_dataset_flags(p)
    p.add_argument("--task", required=True, choices=[t.value for t in TaskSetting])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--record", required=True, help="record id to profile")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--out", help="output directory (default: current)")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--seeds", type=int, default=3, help="number of random retries")
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p_ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = p_ds.add_subparsers(dest="dataset_command", required=True)
    p = ds_sub.add_parser("inspect", help="class and aspect-group census")
    _add_dataset_flags(p)
    p.add_argument("--out", help="write the census JSON here")
    p.set_defaults(func=cmd_dataset_inspect)

    p_an = sub.add_parser("annotate", help="re-annotation workflow")
    an_sub = p_an.add_subparsers(dest="annotate_command", required=True)

    p = an_sub.add_parser("diff", help="compare two labelings of one dataset")
    _add_dataset_flags(p)
    p.add_argument("--revised", required=True, help="revised TSV dataset path")
    p.add_argument("--full", action="store_true", help="include every change in the JSON")
    p.add_argument("--out", help="write the diff JSON here")
    p.set_defaults(func=cmd_annotate_diff)

    p = an_sub.add_parser("serve", help="run the blind voting service")
    _add_dataset_flags(p)
    p.add_argument("--revised", required=True)
    p.add_argument("--log", required=True, help="append-only vote log (JSONL)")
    p.add_argument("--sample", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--port", type=int, default=8114)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.set_defaults(func=cmd_annotate_serve)

    p = an_sub.add_parser("stats", help="agreement statistics from the vote log")
    _add_dataset_flags(p)
    p.add_argument("--revised", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--sample", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="write the stats JSON here")
    p.set_defaults(func=cmd_annotate_stats)

    p = an_sub.add_parser("merge", help="apply majority decisions to the dataset")
    _add_dataset_flags(p)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help="write the merged TSV here")
    p.set_defaults(func=cmd_annotate_merge)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
