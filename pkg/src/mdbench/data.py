"""Dataset schemas, TSV loaders, label handling and the cross-validation splitter.

Three benchmark record shapes are supported. The binary corpora carry
{literal, metaphorical}-style labels attached to one aspect word per
sentence; the scored corpus uses ordinal metaphoricity scores in
{0, 1, 2, 3}, with -1 marking uncertain annotations. Uncertain rows are
kept at load time and removed by an explicit :func:`filter_uncertain`
step so that dataset hygiene stays auditable.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

UNCERTAIN = -1


class Scheme(str, Enum):
    BINARY_MOH = "binary_moh"
    BINARY_TROFI = "binary_trofi"
    SCORE_LCC = "score_lcc"

    @property
    def num_classes(self) -> int:
        return 4 if self is Scheme.SCORE_LCC else 2

    @property
    def class_names(self) -> tuple[str, ...]:
        if self is Scheme.BINARY_MOH:
            return ("literal", "metaphorical")
        if self is Scheme.BINARY_TROFI:
            return ("literal", "nonliteral")
        return ("0", "1", "2", "3")


class DatasetFormat(str, Enum):
    MOH = "moh"
    TROFI = "trofi"
    LCC = "lcc"


FORMAT_SCHEME = {
    DatasetFormat.MOH: Scheme.BINARY_MOH,
    DatasetFormat.TROFI: Scheme.BINARY_TROFI,
    DatasetFormat.LCC: Scheme.SCORE_LCC,
}

SOURCE_NAME = {
    DatasetFormat.MOH: "MOH",
    DatasetFormat.TROFI: "TroFi",
    DatasetFormat.LCC: "LCC",
}


class LoaderError(ValueError):
    """Malformed dataset file; the message names the offending row."""


@dataclass(frozen=True)
class Label:
    scheme: Scheme
    value: int

    def __post_init__(self):
        if self.scheme is Scheme.SCORE_LCC:
            allowed = {UNCERTAIN, 0, 1, 2, 3}
        else:
            allowed = {0, 1}
        if self.value not in allowed:
            raise ValueError(f"label value {self.value} outside scheme {self.scheme.value}")

    @property
    def uncertain(self) -> bool:
        return self.value == UNCERTAIN


@dataclass(frozen=True)
class Record:
    id: str
    words: tuple[str, ...]
    aspect_index: int
    label: Label
    dataset: str
    target_index: int | None = None

    def __post_init__(self):
        if not self.words:
            raise ValueError(f"record {self.id}: empty sentence")
        if not 0 <= self.aspect_index < len(self.words):
            raise ValueError(
                f"record {self.id}: aspect_index {self.aspect_index} outside sentence "
                f"of {len(self.words)} words"
            )
        if self.target_index is not None and not 0 <= self.target_index < len(self.words):
            raise ValueError(f"record {self.id}: target_index {self.target_index} out of range")

    @property
    def sentence(self) -> str:
        return " ".join(self.words)

    @property
    def aspect_word(self) -> str:
        return self.words[self.aspect_index]


@dataclass(frozen=True)
class Dataset:
    name: str
    scheme: Scheme
    records: tuple[Record, ...]
    # record id -> revision marker, filled in by annotation.merge_relabel
    provenance: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = [i for i, n in Counter(ids).items() if n > 1]
            raise ValueError(f"duplicate record ids: {dupes[:5]}")
        bad = [r.id for r in self.records if r.label.scheme is not self.scheme]
        if bad:
            raise ValueError(f"records with foreign label scheme: {bad[:5]}")

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, record_id: str) -> Record:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of: dict[str, int]
    seed: int
    # label classes with fewer members than k, where stratification reduces
    # to a plain shuffle of that class
    small_classes: tuple[int, ...] = ()

    def members(self, fold: int) -> list[str]:
        return [rid for rid, f in self.fold_of.items() if f == fold]


def _resolve_aspect(raw: str, words: tuple[str, ...], where: str) -> int:
    """Aspect column may hold a word index or a surface form.

    Surface forms resolve to the first exact match, with a warning, so
    files with duplicate words stay loadable.
    """
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    if raw in words:
        logger.warning("%s: aspect given as surface form %r, using first match", where, raw)
        return words.index(raw)
    raise LoaderError(f"{where}: aspect word {raw!r} not found in sentence")


_BINARY_LABELS = {
    Scheme.BINARY_MOH: {"literal": 0, "metaphorical": 1},
    Scheme.BINARY_TROFI: {"literal": 0, "nonliteral": 1, "non-literal": 1},
}


def load_dataset(path: str | Path, format: DatasetFormat | str) -> Dataset:
    """Load a TSV dataset file (header row required).

    Column schemas:
      moh:   id, sentence, aspect_index, label in {literal, metaphorical}
      trofi: id, sentence, aspect_index, label in {literal, nonliteral}
      lcc:   id, sentence, aspect_index, target_index (may be empty),
             score in {-1, 0, 1, 2, 3}

    Rows with score -1 are retained and flagged uncertain; use
    :func:`filter_uncertain` to drop them.
    """
    fmt = DatasetFormat(format)
    scheme = FORMAT_SCHEME[fmt]
    path = Path(path)
    records: list[Record] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, dialect="excel-tab")
        if reader.fieldnames is None:
            raise LoaderError(f"{path}: empty file, header row required")
        required = {"id", "sentence", "aspect_index"}
        required |= {"score"} if fmt is DatasetFormat.LCC else {"label"}
        missing = required - set(reader.fieldnames)
        if missing:
            raise LoaderError(f"{path}: header missing columns {sorted(missing)}")
        for rownum, row in enumerate(reader, start=2):
            where = f"{path}:{rownum}"
            try:
                records.append(_parse_row(row, fmt, scheme, where))
            except LoaderError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise LoaderError(f"{where}: {exc}") from exc
    return Dataset(name=path.stem, scheme=scheme, records=tuple(records))


def _parse_row(row: dict, fmt: DatasetFormat, scheme: Scheme, where: str) -> Record:
    for col in ("id", "sentence", "aspect_index"):
        if row.get(col) in (None, ""):
            raise LoaderError(f"{where}: missing column {col!r}")
    words = tuple(row["sentence"].split())
    if not words:
        raise LoaderError(f"{where}: empty sentence")
    aspect = _resolve_aspect(row["aspect_index"], words, where)
    if not 0 <= aspect < len(words):
        raise LoaderError(f"{where}: aspect_index {aspect} outside sentence of {len(words)} words")

    if fmt is DatasetFormat.LCC:
        raw_score = (row.get("score") or "").strip()
        try:
            value = int(raw_score)
        except ValueError:
            raise LoaderError(f"{where}: score {raw_score!r} is not an integer")
        if value not in (UNCERTAIN, 0, 1, 2, 3):
            raise LoaderError(f"{where}: score {value} outside {{-1,0,1,2,3}}")
        target_raw = (row.get("target_index") or "").strip()
        target = None
        if target_raw:
            try:
                target = int(target_raw)
            except ValueError:
                raise LoaderError(f"{where}: target_index {target_raw!r} is not an integer")
            if not 0 <= target < len(words):
                raise LoaderError(f"{where}: target_index {target} out of range")
    else:
        raw_label = (row.get("label") or "").strip().lower()
        mapping = _BINARY_LABELS[scheme]
        if raw_label not in mapping:
            raise LoaderError(
                f"{where}: label {row.get('label')!r} outside {sorted(set(mapping))}"
            )
        value = mapping[raw_label]
        target = None

    return Record(
        id=row["id"],
        words=words,
        aspect_index=aspect,
        label=Label(scheme, value),
        dataset=SOURCE_NAME[fmt],
        target_index=target,
    )


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset back to its TSV shape (inverse of :func:`load_dataset`)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, dialect="excel-tab")
        if dataset.scheme is Scheme.SCORE_LCC:
            writer.writerow(["id", "sentence", "aspect_index", "target_index", "score"])
            for r in dataset.records:
                target = "" if r.target_index is None else r.target_index
                writer.writerow([r.id, r.sentence, r.aspect_index, target, r.label.value])
        else:
            names = dataset.scheme.class_names
            writer.writerow(["id", "sentence", "aspect_index", "label"])
            for r in dataset.records:
                writer.writerow([r.id, r.sentence, r.aspect_index, names[r.label.value]])


def filter_uncertain(dataset: Dataset) -> Dataset:
    """Drop uncertain (-1) rows, preserving order. No-op for binary schemes."""
    if dataset.scheme is not Scheme.SCORE_LCC:
        return dataset
    kept = tuple(r for r in dataset.records if not r.label.uncertain)
    if len(kept) == len(dataset.records):
        return dataset
    return replace(dataset, records=kept)


def make_folds(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Assign each record to one of k folds, stratified by label class.

    Records are ordered by id within each class before the seeded shuffle,
    so the assignment is independent of the input record order. Per class,
    fold member counts differ by at most one; the same holds for overall
    fold sizes.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > len(dataset.records):
        raise ValueError(f"k={k} exceeds dataset size {len(dataset.records)}")

    by_class: dict[int, list[str]] = defaultdict(list)
    for r in dataset.records:
        by_class[r.label.value].append(r.id)

    rng = np.random.default_rng([seed, k])
    fold_of: dict[str, int] = {}
    small: list[int] = []
    cursor = 0
    for cls in sorted(by_class):
        ids = sorted(by_class[cls])
        if len(ids) < k:
            small.append(cls)
        order = rng.permutation(len(ids))
        for j in order:
            fold_of[ids[j]] = cursor % k
            cursor += 1
    return FoldAssignment(k=k, fold_of=fold_of, seed=seed, small_classes=tuple(small))


def save_folds(assignment: FoldAssignment, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, dialect="excel-tab")
        writer.writerow(["id", "fold"])
        for rid in sorted(assignment.fold_of):
            writer.writerow([rid, assignment.fold_of[rid]])


def load_folds(path: str | Path, seed: int = 0) -> FoldAssignment:
    fold_of: dict[str, int] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, dialect="excel-tab")
        for row in reader:
            fold_of[row["id"]] = int(row["fold"])
    k = max(fold_of.values()) + 1 if fold_of else 0
    return FoldAssignment(k=k, fold_of=fold_of, seed=seed)


def to_sequence_labels(record: Record) -> list[int]:
    """Per-word binary labels: the aspect position carries the record label,
    every other word counts as literal.

    Ordinal scores map to metaphorical at the aspect position when >= 1.
    """
    labels = [0] * len(record.words)
    labels[record.aspect_index] = 1 if record.label.value >= 1 else 0
    return labels
