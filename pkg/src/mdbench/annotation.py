"""Re-annotation workflow: diff two labelings, sample the disagreements,
collect independent votes, and merge majority decisions back in.

All state changes flow through an append-only JSONL event log, so a crash
or restart can rebuild everything by replaying the file.
"""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, Label

ACTIONS = ("revise", "vote", "merge")


class DuplicateVoteError(ValueError):
    """An annotator voted twice on the same record."""


@dataclass(frozen=True)
class LabelChange:
    record_id: str
    old_label: int
    new_label: int


@dataclass(frozen=True)
class DiffReport:
    """Label flips between an original and a revised labeling, compared
    over the record ids both sides share."""

    changes: tuple[LabelChange, ...]
    total: int
    only_in_original: tuple[str, ...] = ()
    only_in_revised: tuple[str, ...] = ()

    @property
    def changed(self) -> int:
        return len(self.changes)

    @property
    def rate(self) -> float:
        if self.total == 0:
            return 0.0
        return self.changed / self.total

    @property
    def percent(self) -> str:
        return f"{100.0 * self.rate:.2f}%"

    def to_dict(self) -> dict:
        return {
            "changed": self.changed,
            "total": self.total,
            "rate": self.rate,
            "percent": self.percent,
            "only_in_original": list(self.only_in_original),
            "only_in_revised": list(self.only_in_revised),
            "changes": [
                {"record_id": c.record_id, "old_label": c.old_label, "new_label": c.new_label}
                for c in self.changes
            ],
        }


def diff_annotations(original: Dataset, revised: Dataset) -> DiffReport:
    if original.scheme is not revised.scheme:
        raise ValueError(
            f"cannot diff {original.scheme.value} against {revised.scheme.value}"
        )
    old = {r.id: r for r in original.records}
    new = {r.id: r for r in revised.records}
    shared = [rid for rid in old if rid in new]
    changes = tuple(
        LabelChange(rid, old[rid].label.value, new[rid].label.value)
        for rid in shared
        if old[rid].label.value != new[rid].label.value
    )
    return DiffReport(
        changes=changes,
        total=len(shared),
        only_in_original=tuple(rid for rid in old if rid not in new),
        only_in_revised=tuple(rid for rid in new if rid not in old),
    )


def sample_disagreements(
    report: DiffReport, n: int, seed: int = 0
) -> tuple[LabelChange, ...]:
    """Uniform sample of n changes without replacement, output in record-id
    order. Asking for more than exist returns them all."""
    if n < 0:
        raise ValueError("sample size must be non-negative")
    changes = sorted(report.changes, key=lambda c: c.record_id)
    if n >= len(changes):
        return tuple(changes)
    rng = np.random.default_rng([seed, len(changes)])
    picked = rng.choice(len(changes), size=n, replace=False)
    return tuple(changes[i] for i in sorted(picked))


@dataclass(frozen=True)
class Vote:
    record_id: str
    annotator_id: str
    label: int


@dataclass(frozen=True)
class AgreementStats:
    """How often votes endorsed the revised label."""

    matching: int
    total: int

    @property
    def rate(self) -> float | None:
        if self.total == 0:
            return None
        return self.matching / self.total

    def to_dict(self) -> dict:
        return {"matching": self.matching, "total": self.total, "rate": self.rate}


def agreement_rate(votes: Iterable[Vote], revised_labels: dict[str, int]) -> AgreementStats:
    """A vote agrees when it matches the revised label for its record.
    Votes on unknown record ids are an error."""
    matching = 0
    total = 0
    for v in votes:
        if v.record_id not in revised_labels:
            raise KeyError(f"vote on unknown record {v.record_id!r}")
        total += 1
        if v.label == revised_labels[v.record_id]:
            matching += 1
    return AgreementStats(matching=matching, total=total)


def majority_vote(labels: Sequence[int], original_label: int) -> int:
    """Strict plurality wins; any tie for the top count keeps the original
    label. No votes also keeps the original."""
    if not labels:
        return original_label
    counts = Counter(labels)
    top = max(counts.values())
    winners = [label for label, c in counts.items() if c == top]
    if len(winners) == 1:
        return winners[0]
    return original_label


def resolve(votes: Iterable[Vote], original_labels: dict[str, int]) -> dict[str, int]:
    """Majority decision per voted record."""
    by_record: dict[str, list[int]] = {}
    for v in votes:
        if v.record_id not in original_labels:
            raise KeyError(f"vote on unknown record {v.record_id!r}")
        by_record.setdefault(v.record_id, []).append(v.label)
    return {
        rid: majority_vote(labels, original_labels[rid])
        for rid, labels in by_record.items()
    }


def merge_relabel(dataset: Dataset, decisions: dict[str, int]) -> Dataset:
    """Apply decided labels, recording provenance for every actual change.

    Unknown record ids are an error; a decision equal to the current label
    is a no-op, which makes the merge idempotent.
    """
    known = {r.id for r in dataset.records}
    unknown = sorted(set(decisions) - known)
    if unknown:
        raise KeyError(f"decisions for unknown records: {unknown}")
    new_records = []
    provenance = list(dataset.provenance)
    for r in dataset.records:
        decided = decisions.get(r.id)
        if decided is None or decided == r.label.value:
            new_records.append(r)
            continue
        new_records.append(
            replace(r, label=Label(value=decided, scheme=dataset.scheme))
        )
        provenance.append((r.id, f"relabel:{r.label.value}->{decided}"))
    return replace(dataset, records=tuple(new_records), provenance=tuple(provenance))


# --- append-only event log ---------------------------------------------------


@dataclass(frozen=True)
class LogEvent:
    ts: float
    record_id: str
    annotator_id: str
    action: str
    label: int | None

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}; expected one of {ACTIONS}")

    def to_dict(self) -> dict:
        return {
            "ts": self.ts,
            "record_id": self.record_id,
            "annotator_id": self.annotator_id,
            "action": self.action,
            "label": self.label,
        }


class RevisionLog:
    """JSONL event log. Appends are flushed per event; reads replay the
    whole file, so state always reflects exactly what is on disk."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(
        self,
        record_id: str,
        annotator_id: str,
        action: str,
        label: int | None,
        ts: float | None = None,
    ) -> LogEvent:
        event = LogEvent(
            ts=time.time() if ts is None else ts,
            record_id=record_id,
            annotator_id=annotator_id,
            action=action,
            label=label,
        )
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
        return event

    def events(self) -> list[LogEvent]:
        if not self.path.exists():
            return []
        out: list[LogEvent] = []
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    payload = json.loads(line)
                    out.append(
                        LogEvent(
                            ts=float(payload["ts"]),
                            record_id=str(payload["record_id"]),
                            annotator_id=str(payload["annotator_id"]),
                            action=str(payload["action"]),
                            label=None if payload["label"] is None else int(payload["label"]),
                        )
                    )
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(f"{self.path}:{lineno}: bad log line: {exc}") from exc
        return out

    def votes(self) -> list[Vote]:
        return [
            Vote(e.record_id, e.annotator_id, e.label)
            for e in self.events()
            if e.action == "vote" and e.label is not None
        ]

    def merges(self) -> dict[str, int]:
        """Last merge decision per record, in log order."""
        decided: dict[str, int] = {}
        for e in self.events():
            if e.action == "merge" and e.label is not None:
                decided[e.record_id] = e.label
        return decided

    def record_vote(
        self, record_id: str, annotator_id: str, label: int, ts: float | None = None
    ) -> LogEvent:
        """Append a vote, enforcing at most one per (record, annotator)."""
        for v in self.votes():
            if v.record_id == record_id and v.annotator_id == annotator_id:
                raise DuplicateVoteError(
                    f"annotator {annotator_id!r} already voted on {record_id!r}"
                )
        return self.append(record_id, annotator_id, "vote", label, ts=ts)
