"""Deterministic synthetic corpora for tests, demos and benchmarks.

The planted-rule generators build sentences from a filler vocabulary that
never overlaps the aspect vocabulary, and the label depends only on which
aspect word was planted. That makes the rule learnable under all three
task settings: the aspect word is visible in the pair encoding's second
segment, in the sentence itself, and at its own token position.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .annotation import LabelChange, Vote
from .data import Dataset, Label, Record, Scheme

FILLERS = (
    "the", "a", "this", "that", "old", "new", "small", "large", "quiet",
    "report", "story", "window", "garden", "music", "river", "morning",
    "letter", "village", "painting", "machine", "evening", "number",
)

LITERAL_ASPECTS = ("table", "chair", "stone", "bread", "glass", "door", "wheel", "coin")
METAPHORICAL_ASPECTS = ("fire", "storm", "poison", "knife", "flood", "thunder", "venom", "blaze")


def _sentence(rng: np.random.Generator, aspect: str, min_len: int, max_len: int):
    n_fill = int(rng.integers(min_len, max_len + 1))
    fillers = [FILLERS[int(i)] for i in rng.integers(0, len(FILLERS), size=n_fill)]
    pos = int(rng.integers(0, n_fill + 1))
    words = tuple(fillers[:pos]) + (aspect,) + tuple(fillers[pos:])
    return words, pos


def make_planted(
    n: int = 200,
    seed: int = 0,
    name: str = "synthetic",
    min_fillers: int = 4,
    max_fillers: int = 7,
) -> Dataset:
    """Balanced binary dataset where the aspect word decides the label."""
    if n < 2 or n % 2:
        raise ValueError("n must be even and at least 2")
    rng = np.random.default_rng([seed, 11])
    records = []
    for i in range(n):
        metaphorical = i % 2
        pool = METAPHORICAL_ASPECTS if metaphorical else LITERAL_ASPECTS
        aspect = pool[int(rng.integers(0, len(pool)))]
        words, pos = _sentence(rng, aspect, min_fillers, max_fillers)
        records.append(
            Record(
                id=f"syn{i:04d}",
                words=words,
                aspect_index=pos,
                label=Label(scheme=Scheme.BINARY_MOH, value=metaphorical),
                dataset=name,
            )
        )
    return Dataset(name=name, scheme=Scheme.BINARY_MOH, records=tuple(records))


def make_separable(n: int = 32, seed: int = 0) -> Dataset:
    """Tiny planted-rule set for overfitting checks (short sentences)."""
    return make_planted(n=n, seed=seed, name="separable", min_fillers=3, max_fillers=4)


def make_group_fixture(name: str = "moh_shaped") -> Dataset:
    """Aspect-group census fixture: 438 distinct aspect surfaces over 1640
    records with 410 metaphorical labels; 194 groups are entirely literal,
    11 entirely metaphorical, the rest mixed."""
    rng = np.random.default_rng([7, 13])
    records = []
    idx = 0

    def add(aspect: str, value: int):
        nonlocal idx
        words, pos = _sentence(rng, aspect, 4, 6)
        records.append(
            Record(
                id=f"moh{idx:04d}",
                words=words,
                aspect_index=pos,
                label=Label(scheme=Scheme.BINARY_MOH, value=value),
                dataset=name,
            )
        )
        idx += 1

    for g in range(11):  # all-metaphorical groups, two records each
        for _ in range(2):
            add(f"met{g:03d}", 1)
    for g in range(194):  # all-literal groups, five records each
        for _ in range(5):
            add(f"lit{g:03d}", 0)
    for g in range(233):  # mixed groups: one of each, plus extras
        add(f"mix{g:03d}", 1)
        add(f"mix{g:03d}", 0)
        if g < 155:
            add(f"mix{g:03d}", 1)
        elif g < 155 + 27:
            add(f"mix{g:03d}", 0)
    return Dataset(name=name, scheme=Scheme.BINARY_MOH, records=tuple(records))


LCC_CLASS_COUNTS = {-1: 176, 0: 493, 1: 1242, 2: 1251, 3: 1838}


def make_lcc_fixture(name: str = "lcc_shaped") -> Dataset:
    """Graded-score fixture with the class census 493/1242/1251/1838 after
    dropping the 176 uncertain (-1) rows."""
    rng = np.random.default_rng([7, 17])
    records = []
    idx = 0
    for value in sorted(LCC_CLASS_COUNTS):
        for _ in range(LCC_CLASS_COUNTS[value]):
            words, pos = _sentence(rng, f"asp{idx % 97:02d}", 4, 6)
            target = None
            if idx % 3 == 0 and len(words) > pos + 1:
                target = pos + 1
            records.append(
                Record(
                    id=f"lcc{idx:05d}",
                    words=words,
                    aspect_index=pos,
                    label=Label(scheme=Scheme.SCORE_LCC, value=value),
                    dataset=name,
                    target_index=target,
                )
            )
            idx += 1
    return Dataset(name=name, scheme=Scheme.SCORE_LCC, records=tuple(records))


def make_diff_pair(seed: int = 0) -> tuple[Dataset, Dataset]:
    """An original/revised pair shaped like a relabeling pass: the revision
    drops one record, leaving 1639 shared ids, and flips exactly 402 labels
    (a 24.53% disagreement rate)."""
    rng = np.random.default_rng([seed, 19])
    original_records = []
    for i in range(1640):
        value = 1 if i % 4 == 0 else 0
        aspect = (METAPHORICAL_ASPECTS if value else LITERAL_ASPECTS)[i % 8]
        words, pos = _sentence(rng, aspect, 4, 6)
        original_records.append(
            Record(
                id=f"d{i:04d}",
                words=words,
                aspect_index=pos,
                label=Label(scheme=Scheme.BINARY_MOH, value=value),
                dataset="original",
            )
        )
    original = Dataset(
        name="original", scheme=Scheme.BINARY_MOH, records=tuple(original_records)
    )

    kept = original_records[:-1]  # the revision drops the final record
    flip_positions = set(
        int(i) for i in rng.choice(len(kept), size=402, replace=False)
    )
    revised_records = []
    for pos_i, r in enumerate(kept):
        value = 1 - r.label.value if pos_i in flip_positions else r.label.value
        revised_records.append(
            replace(
                r, label=Label(scheme=Scheme.BINARY_MOH, value=value), dataset="revised"
            )
        )
    revised = Dataset(
        name="revised", scheme=Scheme.BINARY_MOH, records=tuple(revised_records)
    )
    return original, revised


def make_votes(
    sample: Sequence[LabelChange],
    revised_labels: dict[str, int],
    original_labels: dict[str, int],
    annotators: Sequence[str] = ("a1", "a2", "a3"),
    agree_first: int = 66,
) -> list[Vote]:
    """Votes over a sample such that every annotator endorses the revision
    on the first ``agree_first`` records (id order) and the original label
    on the rest. With 3 annotators over 100 records and agree_first=66 the
    agreement rate is exactly 198/300."""
    votes = []
    ordered = sorted(sample, key=lambda c: c.record_id)
    for i, change in enumerate(ordered):
        for a in annotators:
            label = (
                revised_labels[change.record_id]
                if i < agree_first
                else original_labels[change.record_id]
            )
            votes.append(Vote(record_id=change.record_id, annotator_id=a, label=label))
    return votes
