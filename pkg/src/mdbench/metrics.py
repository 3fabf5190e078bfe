"""Evaluation: confusion matrices, binary and macro F1, stratified
cross-validation, and aspect-level corpus summaries.

F1 conventions: the binary form scores class 1 as positive via
``2*tp / (2*tp + fp + fn)``; the macro form averages per-class F1 over all
classes in id order. A class with no gold members and no predictions
scores 0.0 rather than being skipped, which keeps macro averages
comparable across folds. Reports state which averaging they used.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import Dataset, Record, filter_uncertain, make_folds, to_sequence_labels
from .encoder import EncoderConfig, EncoderModel, init_model
from .tasks import TaskKind, TaskSetting, encode_for_task, predict_batch
from .tokenization import Vocab, build_vocab
from .training import TrainConfig, fit

SCORE_BATCH = 64


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[gold][pred]; class ids index both axes."""

    counts: tuple[tuple[int, ...], ...]
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(self.counts)
        if any(len(row) != n for row in self.counts):
            raise ValueError("confusion matrix must be square")
        if self.class_names is not None and len(self.class_names) != n:
            raise ValueError("one class name per class required")

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def support(self, c: int) -> int:
        return sum(self.counts[c])

    def predicted(self, c: int) -> int:
        return sum(row[c] for row in self.counts)

    def true_positive(self, c: int) -> int:
        return self.counts[c][c]

    def accuracy(self) -> float:
        total = self.total
        if total == 0:
            return 0.0
        return sum(self.counts[c][c] for c in range(self.num_classes)) / total

    def to_dict(self) -> dict:
        return {
            "counts": [list(row) for row in self.counts],
            "class_names": list(self.class_names) if self.class_names else None,
        }


def confusion(
    golds: Sequence[int],
    preds: Sequence[int],
    num_classes: int,
    class_names: tuple[str, ...] | None = None,
) -> ConfusionMatrix:
    if len(golds) != len(preds):
        raise ValueError(f"{len(golds)} golds vs {len(preds)} predictions")
    counts = [[0] * num_classes for _ in range(num_classes)]
    for g, p in zip(golds, preds):
        if not (0 <= g < num_classes and 0 <= p < num_classes):
            raise ValueError(f"label pair ({g}, {p}) outside [0, {num_classes})")
        counts[g][p] += 1
    return ConfusionMatrix(tuple(tuple(row) for row in counts), class_names)


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def f1_binary(cm: ConfusionMatrix, positive: int = 1) -> float:
    tp = cm.true_positive(positive)
    fp = cm.predicted(positive) - tp
    fn = cm.support(positive) - tp
    return _f1_from_counts(tp, fp, fn)


def f1_macro(cm: ConfusionMatrix) -> float:
    total = 0.0
    for c in range(cm.num_classes):
        tp = cm.true_positive(c)
        total += _f1_from_counts(tp, cm.predicted(c) - tp, cm.support(c) - tp)
    return total / cm.num_classes


def f1(
    golds: Sequence[int],
    preds: Sequence[int],
    num_classes: int = 2,
    average: str = "binary",
    positive: int = 1,
) -> float:
    cm = confusion(golds, preds, num_classes)
    if average == "binary":
        return f1_binary(cm, positive)
    if average == "macro":
        return f1_macro(cm)
    raise ValueError(f"unknown average {average!r}; use 'binary' or 'macro'")


def averaging_for(task: TaskKind) -> str:
    return "binary" if task.num_classes == 2 else "macro"


def score_records(
    model: EncoderModel,
    task: TaskKind,
    records: Sequence[Record],
    vocab: Vocab,
    max_len: int,
    batch_size: int = SCORE_BATCH,
) -> tuple[list[int], list[int], float, ConfusionMatrix]:
    """Predict every record and score the task's F1.

    Sequence labeling scores are token level: each word contributes one
    (gold, predicted) pair. Returns (golds, preds, f1, confusion).
    """
    encodings = [encode_for_task(task, vocab, r, max_len) for r in records]
    golds: list[int] = []
    preds: list[int] = []
    for start in range(0, len(records), batch_size):
        chunk = encodings[start : start + batch_size]
        chunk_records = records[start : start + batch_size]
        predictions = predict_batch(model, task, chunk, mask_id=vocab.mask_id)
        for record, pred in zip(chunk_records, predictions):
            if task.setting is TaskSetting.SEQUENCE_LABELING:
                gold_labels = to_sequence_labels(record)
                assert isinstance(pred.label, tuple)
                golds.extend(gold_labels)
                preds.extend(pred.label)
            else:
                golds.append(record.label.value)
                preds.append(int(pred.label))
    cm = confusion(golds, preds, task.num_classes)
    average = averaging_for(task)
    value = f1_binary(cm) if average == "binary" else f1_macro(cm)
    return golds, preds, value, cm


@dataclass
class CVReport:
    dataset: str
    task: str
    readout: str
    k: int
    seed: int
    averaging: str
    fold_f1: list[float]
    fold_sizes: list[int]
    mean_f1: float
    std_f1: float
    config: dict
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "task": self.task,
            "readout": self.readout,
            "k": self.k,
            "seed": self.seed,
            "averaging": self.averaging,
            "std_ddof": 0,
            "fold_f1": self.fold_f1,
            "fold_sizes": self.fold_sizes,
            "mean_f1": self.mean_f1,
            "std_f1": self.std_f1,
            "config": self.config,
            "timing": self.timing,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "CVReport":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in payload.items() if k in known})


def fold_seed(seed: int, fold: int) -> int:
    """Stable per-fold seed derivation."""
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def cross_validate(
    dataset: Dataset,
    task: TaskKind,
    k: int = 10,
    seed: int = 0,
    train_cfg: TrainConfig | None = None,
    encoder_cfg: EncoderConfig | None = None,
    vocab: Vocab | None = None,
    progress=None,
) -> CVReport:
    """Stratified k-fold cross-validation.

    Uncertain-label records are dropped up front for every setting. The
    vocabulary is built once over the full corpus (not per fold); each fold
    trains a freshly initialized model under a fold-derived seed and is
    scored on its held-out records. ``encoder_cfg.vocab_size`` is always
    overridden to the built vocabulary's size. Everything in the report
    except the ``timing`` block is reproducible byte for byte for a fixed
    (dataset, task, k, seed, config).
    """
    train_cfg = train_cfg or TrainConfig()
    filtered = filter_uncertain(dataset)
    records = filtered.records
    if vocab is None:
        vocab = build_vocab(" ".join(r.words) for r in records)
    encoder_cfg = encoder_cfg or EncoderConfig.desk()
    encoder_cfg = replace(
        encoder_cfg, vocab_size=len(vocab), max_len=train_cfg.max_len
    )

    assignment = make_folds(filtered, k=k, seed=seed)
    by_fold: dict[int, list[Record]] = {f: [] for f in range(k)}
    for r in records:
        by_fold[assignment.fold_of[r.id]].append(r)

    averaging = averaging_for(task)
    fold_f1: list[float] = []
    fold_sizes: list[int] = []
    fold_times: list[float] = []
    started = time.perf_counter()
    for f in range(k):
        t0 = time.perf_counter()
        heldout = by_fold[f]
        train_records = [r for g in range(k) if g != f for r in by_fold[g]]
        fseed = fold_seed(seed, f)
        model = init_model(replace(encoder_cfg, seed=fseed), num_classes=task.num_classes)
        fit(model, task, train_records, replace(train_cfg, seed=fseed), vocab)
        _, _, value, _ = score_records(model, task, heldout, vocab, train_cfg.max_len)
        fold_f1.append(value)
        fold_sizes.append(len(heldout))
        fold_times.append(time.perf_counter() - t0)
        if progress is not None:
            progress(f, value)

    return CVReport(
        dataset=dataset.name,
        task=task.setting.value,
        readout=task.readout,
        k=k,
        seed=seed,
        averaging=averaging,
        fold_f1=fold_f1,
        fold_sizes=fold_sizes,
        mean_f1=float(np.mean(fold_f1)),
        std_f1=float(np.std(fold_f1)),
        config={
            "train": asdict(train_cfg),
            "encoder": asdict(encoder_cfg),
            "num_classes": task.num_classes,
            "small_classes": list(assignment.small_classes),
        },
        timing={"per_fold_seconds": fold_times, "total_seconds": time.perf_counter() - started},
    )


# --- aspect-level corpus summaries ------------------------------------------


@dataclass(frozen=True)
class GroupSummary:
    """Records grouped by lowercased aspect surface form.

    ``histograms`` maps each surface form to {label value: count}. A group
    is all-literal when every member has label value 0, all-metaphorical
    when no member does (uncertain records are excluded up front).
    """

    histograms: dict[str, dict[int, int]]

    @property
    def total_groups(self) -> int:
        return len(self.histograms)

    @property
    def all_literal(self) -> int:
        return sum(1 for h in self.histograms.values() if set(h) == {0})

    @property
    def all_metaphorical(self) -> int:
        return sum(1 for h in self.histograms.values() if 0 not in h)

    @property
    def mixed(self) -> int:
        return self.total_groups - self.all_literal - self.all_metaphorical

    @property
    def total_records(self) -> int:
        return sum(sum(h.values()) for h in self.histograms.values())

    def to_dict(self) -> dict:
        return {
            "total_groups": self.total_groups,
            "all_literal": self.all_literal,
            "all_metaphorical": self.all_metaphorical,
            "mixed": self.mixed,
            "total_records": self.total_records,
            "histograms": {
                k: {str(v): n for v, n in sorted(h.items())}
                for k, h in sorted(self.histograms.items())
            },
        }


def group_by_aspect(dataset: Dataset) -> GroupSummary:
    histograms: dict[str, dict[int, int]] = {}
    for r in filter_uncertain(dataset).records:
        surface = r.words[r.aspect_index].lower()
        hist = histograms.setdefault(surface, {})
        hist[r.label.value] = hist.get(r.label.value, 0) + 1
    return GroupSummary(histograms)


# --- report rendering -------------------------------------------------------

TASK_COLUMNS = (
    TaskSetting.WORD_LEVEL.value,
    TaskSetting.SENTENCE_LEVEL.value,
    TaskSetting.SEQUENCE_LABELING.value,
)


def summarize_reports(reports: Sequence[CVReport]) -> dict:
    """Nested {dataset: {task: {mean_f1, std_f1, fold_f1, averaging}}}."""
    out: dict[str, dict] = {}
    for r in reports:
        out.setdefault(r.dataset, {})[r.task] = {
            "mean_f1": r.mean_f1,
            "std_f1": r.std_f1,
            "fold_f1": r.fold_f1,
            "averaging": r.averaging,
            "k": r.k,
        }
    return out


def render_f1_grid(reports: Sequence[CVReport]) -> str:
    """Markdown grid, datasets as rows and task settings as columns; cells
    are mean F1 x 100 to two decimals."""
    summary = summarize_reports(reports)
    lines = [
        "| dataset | " + " | ".join(TASK_COLUMNS) + " |",
        "|---" * (len(TASK_COLUMNS) + 1) + "|",
    ]
    for name, tasks in summary.items():
        cells = []
        for col in TASK_COLUMNS:
            if col in tasks:
                cells.append(f"{100.0 * tasks[col]['mean_f1']:.2f}")
            else:
                cells.append("-")
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
