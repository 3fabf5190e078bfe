"""Word-level attention profiles for inspection.

A profile captures how much the final layer's classification-token query
attends to each source word: take the CLS query row of the last layer,
average the heads, fold subword weights back onto their source words,
drop special tokens (and the comparison segment of pair encodings), and
renormalize so the word scores sum to one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .data import Record
from .encoder import EncoderModel
from .tasks import TaskKind, TaskSetting, encode_for_task, predict
from .tokenization import DEFAULT_MAX_LEN, Vocab


@dataclass(frozen=True)
class AttentionProfile:
    """Per-word attention weights for one record.

    ``scores`` aligns with ``words``; a word whose pieces were truncated
    away scores 0. ``predicted_label`` is the model's class for the record
    (for sequence labeling: the class of the aspect word).
    """

    record_id: str
    words: tuple[str, ...]
    scores: tuple[float, ...]
    aspect_index: int
    predicted_label: int

    def __post_init__(self):
        if len(self.words) != len(self.scores):
            raise ValueError("one score per word required")
        if not 0 <= self.aspect_index < len(self.words):
            raise IndexError(f"aspect_index {self.aspect_index} out of range")

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "words": list(self.words),
            "scores": list(self.scores),
            "aspect_index": self.aspect_index,
            "predicted_label": self.predicted_label,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "AttentionProfile":
        return cls(
            record_id=payload["record_id"],
            words=tuple(payload["words"]),
            scores=tuple(float(s) for s in payload["scores"]),
            aspect_index=int(payload["aspect_index"]),
            predicted_label=int(payload["predicted_label"]),
        )


def cls_attention(
    model: EncoderModel,
    task: TaskKind,
    vocab: Vocab,
    record: Record,
    max_len: int = DEFAULT_MAX_LEN,
) -> AttentionProfile:
    """Profile one record under its task encoding.

    Word-level tasks attend over their masked sentence; the profile still
    lists the original words, so the aspect slot shows the word the mask
    stands in for.
    """
    enc = encode_for_task(task, vocab, record, max_len)
    pred = predict(model, task, enc, mask_id=vocab.mask_id)
    # pred.attention: [heads, L, L]; row 0 is the classification token query
    cls_row = np.asarray(pred.attention)[:, 0, :].mean(axis=0)

    weights = np.zeros(len(record.words), dtype=np.float64)
    for pos, (word, seg) in enumerate(zip(enc.word_alignment, enc.segment_ids)):
        if word is None or seg != 0:
            continue
        if word < len(record.words):
            weights[word] += cls_row[pos]
    total = weights.sum()
    if total > 0:
        weights = weights / total

    if task.setting is TaskSetting.SEQUENCE_LABELING:
        assert isinstance(pred.label, tuple)
        label = int(pred.label[record.aspect_index]) if pred.label else 0
    else:
        label = int(pred.label)
    return AttentionProfile(
        record_id=record.id,
        words=record.words,
        scores=tuple(float(w) for w in weights),
        aspect_index=record.aspect_index,
        predicted_label=label,
    )


def save_profile(profile: AttentionProfile, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(profile.to_dict(), indent=2) + "\n", encoding="utf-8"
    )


def load_profile(path: str | Path) -> AttentionProfile:
    return AttentionProfile.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_CHAR_W = 9
_PAD_X = 10
_GAP = 14
_HEIGHT = 64


def render_svg(profile: AttentionProfile) -> str:
    """Self-contained heatmap: one box per word, fill intensity proportional
    to its attention share, the aspect word in bold."""
    peak = max(profile.scores) if profile.scores and max(profile.scores) > 0 else 1.0
    x = _PAD_X
    boxes = []
    for i, (word, score) in enumerate(zip(profile.words, profile.scores)):
        w = max(len(word) * _CHAR_W + 10, 28)
        intensity = score / peak
        weight = ' font-weight="bold"' if i == profile.aspect_index else ""
        boxes.append(
            f'<g><title>{escape(word)}: {score:.4f}</title>'
            f'<rect x="{x}" y="14" width="{w}" height="34" rx="4" '
            f'fill="rgb(214,69,47)" fill-opacity="{intensity:.4f}" '
            f'stroke="#888" stroke-width="1"/>'
            f'<text x="{x + w / 2:.1f}" y="36" text-anchor="middle" '
            f'font-family="monospace" font-size="14"{weight}>{escape(word)}</text></g>'
        )
        x += w + _GAP
    width = x + _PAD_X - _GAP
    header = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{_HEIGHT}" '
        f'viewBox="0 0 {width} {_HEIGHT}">'
    )
    return header + "".join(boxes) + "</svg>"


def export_heatmap(profile: AttentionProfile, out_dir: str | Path) -> tuple[Path, Path]:
    """Write <record_id>.json and <record_id>.svg; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{profile.record_id}.json"
    svg_path = out / f"{profile.record_id}.svg"
    save_profile(profile, json_path)
    svg_path.write_text(render_svg(profile), encoding="utf-8")
    return json_path, svg_path
