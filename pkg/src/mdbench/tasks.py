"""The three task formulations, each an input-encoding rule plus one linear
layer over encoder states.

word_level feeds the masked/original sentence pair and classifies from the
leading pooled token, so the model judges whether the masked slot fits its
context. sentence_level feeds the sentence unchanged. sequence_labeling
classifies every subtoken and projects back to words through the
first-subtoken rule: continuation pieces never carry labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .data import Record, Scheme
from .encoder import EncoderModel, forward, pool_cls, stack_encodings
from .tokenization import DEFAULT_MAX_LEN, InputEncoding, Vocab, encode_pair, encode_single, mask_aspect

IGNORE_INDEX = -100


class TaskSetting(str, Enum):
    WORD_LEVEL = "word_level"
    SENTENCE_LEVEL = "sentence_level"
    SEQUENCE_LABELING = "sequence_labeling"


class RecordUnusableError(ValueError):
    """The aspect span did not survive truncation; the record cannot be used."""


@dataclass(frozen=True)
class TaskKind:
    setting: TaskSetting
    num_classes: int
    # word_level may read the masked position's state instead of the pooled
    # token; pooled is the default
    readout: str = "cls"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.readout not in ("cls", "mask"):
            raise ValueError(f"unknown readout {self.readout!r}")

    @classmethod
    def for_scheme(cls, setting: TaskSetting | str, scheme: Scheme) -> "TaskKind":
        setting = TaskSetting(setting)
        if setting is TaskSetting.SEQUENCE_LABELING:
            return cls(setting, 2)
        return cls(setting, scheme.num_classes)


@dataclass(frozen=True)
class Prediction:
    """logits are [num_classes] for classification tasks and
    [num_words, num_classes] for sequence labeling; label follows, as a
    single class index or a per-word tuple. Ties go to the lowest index."""

    logits: np.ndarray
    label: int | tuple[int, ...]
    attention: np.ndarray | None = None


def encode_for_task(
    task: TaskKind, vocab: Vocab, record: Record, max_len: int = DEFAULT_MAX_LEN
) -> InputEncoding:
    """Build the task's input encoding for one record."""
    if task.setting is TaskSetting.WORD_LEVEL:
        masked = mask_aspect(vocab, record.words, record.aspect_index)
        enc = encode_pair(vocab, masked, record.words, max_len)
        has_mask = any(
            t == vocab.mask_id and s == 0
            for t, s, m in zip(enc.token_ids, enc.segment_ids, enc.attention_mask)
            if m == 1
        )
        if not has_mask or not enc.word_positions(record.aspect_index, segment=1):
            raise RecordUnusableError(
                f"record {record.id}: aspect truncated away at max_len={max_len}"
            )
        return enc
    enc = encode_single(vocab, record.words, max_len)
    if task.setting is TaskSetting.SEQUENCE_LABELING and not enc.word_positions(
        record.aspect_index
    ):
        raise RecordUnusableError(
            f"record {record.id}: aspect truncated away at max_len={max_len}"
        )
    return enc


def _readout_position(enc: InputEncoding, vocab_mask_id: int | None) -> int:
    if vocab_mask_id is None:
        return 0
    for pos, (t, s, m) in enumerate(zip(enc.token_ids, enc.segment_ids, enc.attention_mask)):
        if m == 1 and s == 0 and t == vocab_mask_id:
            return pos
    return 0


def predict(
    model: EncoderModel,
    task: TaskKind,
    enc: InputEncoding,
    mask_id: int | None = None,
) -> Prediction:
    """Inference for one encoding. ``mask_id`` is only consulted for the
    word_level mask readout."""
    if model.num_classes != task.num_classes:
        raise ValueError(
            f"model head has {model.num_classes} classes, task wants {task.num_classes}"
        )
    out = forward(model, enc)
    w, b = model.params["head.w"], model.params["head.b"]
    if task.setting is TaskSetting.SEQUENCE_LABELING:
        token_logits = out.hidden_states @ w + b
        if enc.num_words is None:
            raise ValueError("sequence labeling needs a single-sentence encoding")
        rows = np.zeros((enc.num_words, task.num_classes))
        for word in range(enc.num_words):
            positions = enc.word_positions(word)
            if positions:
                rows[word] = token_logits[positions[0]]
        labels = tuple(int(np.argmax(r)) for r in rows)
        return Prediction(logits=rows, label=labels, attention=out.last_layer_attention)

    if task.setting is TaskSetting.WORD_LEVEL and task.readout == "mask":
        vec = out.hidden_states[_readout_position(enc, mask_id)]
    else:
        vec = pool_cls(out)
    logits = vec @ w + b
    return Prediction(
        logits=logits, label=int(np.argmax(logits)), attention=out.last_layer_attention
    )


def predict_batch(
    model: EncoderModel,
    task: TaskKind,
    encodings: list[InputEncoding],
    mask_id: int | None = None,
) -> list[Prediction]:
    """Batched inference; same results as mapping :func:`predict`, minus the
    per-record attention snapshots."""
    if model.num_classes != task.num_classes:
        raise ValueError(
            f"model head has {model.num_classes} classes, task wants {task.num_classes}"
        )
    batch = stack_encodings(encodings, trim=True)
    from .encoder import forward_batch

    out = forward_batch(model, batch)
    w, b = model.params["head.w"], model.params["head.b"]
    preds: list[Prediction] = []
    if task.setting is TaskSetting.SEQUENCE_LABELING:
        token_logits = out.hidden_states @ w + b
        for item, enc in enumerate(encodings):
            rows = np.zeros((enc.num_words, task.num_classes))
            for word in range(enc.num_words):
                positions = enc.word_positions(word)
                if positions and positions[0] < token_logits.shape[1]:
                    rows[word] = token_logits[item, positions[0]]
            preds.append(Prediction(logits=rows, label=tuple(int(np.argmax(r)) for r in rows)))
        return preds
    if task.setting is TaskSetting.WORD_LEVEL and task.readout == "mask":
        positions = np.array(
            [_readout_position(enc, mask_id) for enc in encodings], dtype=np.int64
        )
        pooled = out.hidden_states[np.arange(len(encodings)), positions, :]
    else:
        pooled = pool_cls(out)
    logits = pooled @ w + b
    for row in logits:
        preds.append(Prediction(logits=row, label=int(np.argmax(row))))
    return preds


def project_token_labels(
    enc: InputEncoding, gold: list[int], ignore_index: int = IGNORE_INDEX
) -> np.ndarray:
    """Per-position training targets: the first subtoken of each word takes
    the word's label, everything else (continuations, specials, padding)
    takes the ignore marker."""
    if enc.num_words is None:
        raise ValueError("token labels need a single-sentence encoding")
    if len(gold) != enc.num_words:
        raise ValueError(f"gold has {len(gold)} labels for {enc.num_words} words")
    targets = np.full(enc.length, ignore_index, dtype=np.int64)
    seen: set[int] = set()
    for pos, word in enumerate(enc.word_alignment):
        if word is not None and word not in seen:
            targets[pos] = gold[word]
            seen.add(word)
    return targets


def write_predictions(
    path: str | Path,
    task: TaskKind,
    record_ids: list[str],
    golds: list,
    preds: list[Prediction],
) -> None:
    """Prediction dump: one TSV row per record, or per word for sequence
    labeling."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, dialect="excel-tab")
        if task.setting is TaskSetting.SEQUENCE_LABELING:
            writer.writerow(["id", "word_index", "gold", "pred"])
            for rid, gold_seq, pred in zip(record_ids, golds, preds):
                for w, (g, p) in enumerate(zip(gold_seq, pred.label)):
                    writer.writerow([rid, w, g, p])
        else:
            writer.writerow(["id", "gold", "pred", "logits"])
            for rid, gold, pred in zip(record_ids, golds, preds):
                joined = ";".join(repr(float(v)) for v in np.asarray(pred.logits))
                writer.writerow([rid, gold, pred.label, joined])
