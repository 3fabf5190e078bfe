"""Subword vocabulary and the fixed-length input encodings.

The vocabulary is merge-built: start from characters (continuation pieces
carry a ``##`` marker), then repeatedly merge the most frequent adjacent
pair until the size budget is reached. Tokenization is greedy
longest-match within each word, with a single UNK piece as fallback, so
every string is tokenizable. Casing is preserved.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
CONTINUATION = "##"

DEFAULT_MAX_LEN = 128


@dataclass(frozen=True)
class Vocab:
    token_to_id: dict[str, int]

    def __post_init__(self):
        missing = [t for t in SPECIALS if t not in self.token_to_id]
        if missing:
            raise ValueError(f"vocab missing special tokens {missing}")
        if len(set(self.token_to_id.values())) != len(self.token_to_id):
            raise ValueError("vocab ids are not distinct")

    def __len__(self) -> int:
        return len(self.token_to_id)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]

    @property
    def mask_id(self) -> int:
        return self.token_to_id[MASK]

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)


def _word_symbols(word: str) -> tuple[str, ...]:
    return (word[0],) + tuple(CONTINUATION + c for c in word[1:])


def build_vocab(corpus: Iterable[str], size: int | None = None, *, merges: int = 400) -> Vocab:
    """Build a deterministic subword vocabulary of at most ``size`` tokens.

    ``corpus`` is any iterable of text lines. Ties between equally frequent
    pairs break lexicographically, so two builds over the same corpus are
    identical. With ``size=None`` the budget is the specials plus the base
    alphabet plus ``merges`` merge slots.
    """
    word_counts: Counter[str] = Counter()
    for line in corpus:
        word_counts.update(line.split())

    base = sorted({sym for word in word_counts for sym in _word_symbols(word)})
    needed = len(SPECIALS) + len(base)
    if size is None:
        size = needed + merges
    if size < needed:
        raise ValueError(
            f"vocab size {size} too small: need {needed} for specials plus base characters"
        )

    tokens = list(SPECIALS) + base
    known = set(tokens)
    # each distinct word as its current symbol sequence, weighted by count
    pieces: dict[str, list[str]] = {w: list(_word_symbols(w)) for w in word_counts}

    while len(tokens) < size:
        pair_counts: Counter[tuple[str, str]] = Counter()
        for word, syms in pieces.items():
            n = word_counts[word]
            for a, b in zip(syms, syms[1:]):
                pair_counts[(a, b)] += n
        if not pair_counts:
            break
        top = max(pair_counts.values())
        best = min(p for p, c in pair_counts.items() if c == top)
        merged = best[0] + best[1][len(CONTINUATION):]
        if merged in known:
            # already present (e.g. via the base alphabet); drop the pair by
            # rewriting occurrences without growing the vocab
            pass
        else:
            tokens.append(merged)
            known.add(merged)
        for syms in pieces.values():
            i = 0
            while i < len(syms) - 1:
                if (syms[i], syms[i + 1]) == best:
                    syms[i : i + 2] = [merged]
                else:
                    i += 1

    return Vocab({t: i for i, t in enumerate(tokens)})


def vocab_to_text(vocab: Vocab) -> str:
    """Token-per-line form; the line number is the id."""
    ordered = sorted(vocab.token_to_id, key=vocab.token_to_id.get)
    if list(range(len(ordered))) != sorted(vocab.token_to_id.values()):
        raise ValueError("vocab ids must be a contiguous 0..n-1 range to serialize")
    return "\n".join(ordered) + "\n"


def vocab_from_text(text: str) -> Vocab:
    return Vocab({t: i for i, t in enumerate(text.splitlines()) if t})


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    """One token per line (line number = id) plus a JSON sidecar for specials."""
    path = Path(path)
    ordered = sorted(vocab.token_to_id, key=vocab.token_to_id.get)
    path.write_text("\n".join(ordered) + "\n", encoding="utf-8")
    sidecar = path.with_name(path.name + ".specials.json")
    sidecar.write_text(
        json.dumps({t: vocab.token_to_id[t] for t in SPECIALS}, indent=2) + "\n",
        encoding="utf-8",
    )


def load_vocab(path: str | Path) -> Vocab:
    """Read a token-per-line vocabulary.

    Plain files without the sidecar (e.g. an externally produced WordPiece
    vocabulary) work too, as long as they contain the special tokens.
    """
    path = Path(path)
    tokens = path.read_text(encoding="utf-8").splitlines()
    mapping = {t: i for i, t in enumerate(tokens) if t}
    sidecar = path.with_name(path.name + ".specials.json")
    if sidecar.exists():
        declared = json.loads(sidecar.read_text(encoding="utf-8"))
        for token, idx in declared.items():
            if mapping.get(token) != idx:
                raise ValueError(f"{path}: special {token!r} not at declared id {idx}")
    return Vocab(mapping)


def tokenize(vocab: Vocab, words: Iterable[str]) -> tuple[list[str], list[int]]:
    """Greedy longest-match subword split.

    Returns the piece sequence and a same-length alignment mapping each
    piece to the index of its source word. A word with no matchable prefix
    becomes a single UNK piece.
    """
    pieces: list[str] = []
    alignment: list[int] = []
    for w_idx, word in enumerate(words):
        word_pieces = []
        start = 0
        while start < len(word):
            end = len(word)
            found = None
            while start < end:
                sub = word[start:end]
                if start > 0:
                    sub = CONTINUATION + sub
                if sub in vocab.token_to_id:
                    found = sub
                    break
                end -= 1
            if found is None:
                word_pieces = [UNK]
                break
            word_pieces.append(found)
            start = end
        pieces.extend(word_pieces)
        alignment.extend([w_idx] * len(word_pieces))
    return pieces, alignment


def mask_aspect(vocab: Vocab, words: tuple[str, ...] | list[str], aspect_index: int) -> tuple[str, ...]:
    """Replace the aspect word with the mask surface token."""
    words = tuple(words)
    if not 0 <= aspect_index < len(words):
        raise IndexError(f"aspect_index {aspect_index} outside sentence of {len(words)} words")
    return words[:aspect_index] + (MASK,) + words[aspect_index + 1 :]


@dataclass(frozen=True)
class InputEncoding:
    """Fixed-length model input.

    ``word_alignment`` maps each position to its source word index, or None
    on specials and padding; for pair encodings the index is relative to
    the position's own segment. ``num_words`` records the source sentence
    word count for single-sentence encodings (None for pairs).
    """

    token_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    word_alignment: tuple[int | None, ...]
    length: int
    num_words: int | None = None

    def __post_init__(self):
        seqs = (self.token_ids, self.segment_ids, self.attention_mask, self.word_alignment)
        if any(len(s) != self.length for s in seqs):
            raise ValueError("encoding sequences must all have the configured length")
        if any(m not in (0, 1) for m in self.attention_mask):
            raise ValueError("attention_mask must be 0/1")
        if any(s not in (0, 1) for s in self.segment_ids):
            raise ValueError("segment_ids must be 0/1")
        for m, a in zip(self.attention_mask, self.word_alignment):
            if m == 0 and a is not None:
                raise ValueError("padding positions cannot align to a word")

    @property
    def used(self) -> int:
        return sum(self.attention_mask)

    def word_positions(self, word_index: int, segment: int = 0) -> list[int]:
        """Positions of the pieces belonging to one source word."""
        return [
            p
            for p, (a, s) in enumerate(zip(self.word_alignment, self.segment_ids))
            if a == word_index and s == segment
        ]


def _pad(ids, segs, mask, align, vocab: Vocab, max_len: int) -> tuple:
    pad_n = max_len - len(ids)
    return (
        tuple(ids + [vocab.pad_id] * pad_n),
        tuple(segs + [0] * pad_n),
        tuple(mask + [0] * pad_n),
        tuple(align + [None] * pad_n),
    )


def encode_single(
    vocab: Vocab, words: Iterable[str], max_len: int = DEFAULT_MAX_LEN
) -> InputEncoding:
    """Layout [CLS] pieces [SEP] padding, truncated to keep CLS and the SEP."""
    words = tuple(words)
    pieces, alignment = tokenize(vocab, words)
    keep = max_len - 2
    pieces, alignment = pieces[:keep], alignment[:keep]
    ids = [vocab.cls_id] + [vocab.id_of(p) for p in pieces] + [vocab.sep_id]
    segs = [0] * len(ids)
    mask = [1] * len(ids)
    align: list[int | None] = [None] + list(alignment) + [None]
    token_ids, segment_ids, attention_mask, word_alignment = _pad(
        ids, segs, mask, align, vocab, max_len
    )
    return InputEncoding(
        token_ids, segment_ids, attention_mask, word_alignment, max_len, num_words=len(words)
    )


def encode_pair(
    vocab: Vocab,
    a_words: Iterable[str],
    b_words: Iterable[str],
    max_len: int = DEFAULT_MAX_LEN,
) -> InputEncoding:
    """Layout [CLS] pieces(a) [SEP] pieces(b) [SEP] padding.

    When over budget, the longer segment loses pieces from its end first,
    keeping the two segments balanced.
    """
    a_pieces, a_align = tokenize(vocab, tuple(a_words))
    b_pieces, b_align = tokenize(vocab, tuple(b_words))
    budget = max_len - 3
    while len(a_pieces) + len(b_pieces) > budget:
        if len(a_pieces) > len(b_pieces):
            a_pieces.pop(), a_align.pop()
        else:
            b_pieces.pop(), b_align.pop()

    ids = (
        [vocab.cls_id]
        + [vocab.id_of(p) for p in a_pieces]
        + [vocab.sep_id]
        + [vocab.id_of(p) for p in b_pieces]
        + [vocab.sep_id]
    )
    segs = [0] * (len(a_pieces) + 2) + [1] * (len(b_pieces) + 1)
    mask = [1] * len(ids)
    align: list[int | None] = [None] + list(a_align) + [None] + list(b_align) + [None]
    token_ids, segment_ids, attention_mask, word_alignment = _pad(
        ids, segs, mask, align, vocab, max_len
    )
    return InputEncoding(token_ids, segment_ids, attention_mask, word_alignment, max_len)
