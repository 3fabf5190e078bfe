"""Cross-entropy training with decoupled-weight-decay Adam, plus the
finite-difference gradient checker used to validate every backward pass.

Fitting is deterministic for a fixed seed: shuffling and dropout draw from
their own seeded streams, and batch order is fixed by the shuffle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .data import Record, to_sequence_labels
from .encoder import (
    EncoderConfig,
    EncoderModel,
    backward,
    forward_batch,
    init_model,
    stack_encodings,
)
from .tasks import (
    IGNORE_INDEX,
    TaskKind,
    TaskSetting,
    encode_for_task,
    project_token_labels,
)
from .tokenization import Vocab

PAPER_EPOCHS = {
    TaskSetting.WORD_LEVEL: 5,
    TaskSetting.SENTENCE_LEVEL: 20,
    TaskSetting.SEQUENCE_LABELING: 20,
}
PAPER_BATCH_SIZE = 128


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0
    max_len: int = 128
    ignore_index: int = IGNORE_INDEX

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_train_f1: list[float] = field(default_factory=list)
    wall_seconds: float = 0.0
    param_checksum: str = ""

    def to_dict(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "epoch_train_f1": self.epoch_train_f1,
            "wall_seconds": self.wall_seconds,
            "param_checksum": self.param_checksum,
        }


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(
    logits: np.ndarray, targets, ignore_index: int = IGNORE_INDEX
) -> float:
    """Mean negative log-likelihood over non-ignored rows.

    Ignored rows contribute nothing; if every row is ignored the loss is
    0.0 by convention (the caller can detect this from a zero count via
    :func:`xent_with_grad`).
    """
    loss, count, _ = xent_with_grad(logits, targets, ignore_index)
    return loss


def xent_with_grad(logits: np.ndarray, targets, ignore_index: int = IGNORE_INDEX):
    """Returns (mean loss, counted rows, dlogits). dlogits is already divided
    by the row count; ignored rows get a zero gradient."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if targets.shape[0] != logits.shape[0]:
        raise ValueError(f"{targets.shape[0]} targets for {logits.shape[0]} logit rows")
    num_classes = logits.shape[1]
    counted = targets != ignore_index
    bad = counted & ((targets < 0) | (targets >= num_classes))
    if bad.any():
        raise ValueError(f"target {targets[bad][0]} outside [0, {num_classes})")
    count = int(counted.sum())
    dlogits = np.zeros_like(logits)
    if count == 0:
        return 0.0, 0, dlogits
    logp = log_softmax(logits[counted])
    rows = np.arange(count)
    loss = float(-logp[rows, targets[counted]].mean())
    grad = np.exp(logp)
    grad[rows, targets[counted]] -= 1.0
    dlogits[counted] = grad / count
    return loss, count, dlogits


class AdamW:
    """Adam with decoupled weight decay. Decay touches matrices only;
    biases, gains and embeddings of rank one stay undecayed."""

    def __init__(self, learning_rate: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay > 0.0 and p.ndim >= 2:
                update = update + self.weight_decay * p
            p -= self.lr * update


def _encode_training_set(
    task: TaskKind, vocab: Vocab, records: Sequence[Record], cfg: TrainConfig
):
    encodings = []
    targets = []
    for r in records:
        enc = encode_for_task(task, vocab, r, cfg.max_len)
        encodings.append(enc)
        if task.setting is TaskSetting.SEQUENCE_LABELING:
            targets.append(project_token_labels(enc, to_sequence_labels(r), cfg.ignore_index))
        else:
            if r.label.uncertain:
                raise ValueError(f"record {r.id} has an uncertain label; filter first")
            targets.append(r.label.value)
    return encodings, targets


def _classification_loss_and_grads(model, batch, targets, train_rng, readout_pos):
    out, cache = forward_batch(model, batch, train=True, rng=train_rng, want_cache=True)
    hidden = out.hidden_states
    B = hidden.shape[0]
    rows = np.arange(B)
    pooled = hidden[rows, readout_pos, :]
    w, b = model.params["head.w"], model.params["head.b"]
    logits = pooled @ w + b
    loss, count, dlogits = xent_with_grad(logits, targets)
    d_hidden = np.zeros_like(hidden)
    d_hidden[rows, readout_pos, :] = dlogits @ w.T
    grads = backward(model, cache, d_hidden)
    grads["head.w"] += pooled.T @ dlogits
    grads["head.b"] += dlogits.sum(axis=0)
    return loss, count, grads


def _token_loss_and_grads(model, batch, target_rows, train_rng):
    out, cache = forward_batch(model, batch, train=True, rng=train_rng, want_cache=True)
    hidden = out.hidden_states
    B, L, H = hidden.shape
    w, b = model.params["head.w"], model.params["head.b"]
    logits = hidden.reshape(B * L, H) @ w + b
    targets = np.stack([t[:L] for t in target_rows]).reshape(B * L)
    loss, count, dlogits = xent_with_grad(logits, targets)
    d_hidden = (dlogits @ w.T).reshape(B, L, H)
    grads = backward(model, cache, d_hidden)
    grads["head.w"] += hidden.reshape(B * L, H).T @ dlogits
    grads["head.b"] += dlogits.sum(axis=0)
    return loss, count, grads


def fit(
    model: EncoderModel,
    task: TaskKind,
    train_records: Sequence[Record],
    cfg: TrainConfig,
    vocab: Vocab,
) -> tuple[EncoderModel, TrainReport]:
    """Train in place for cfg.epochs epochs; no early stopping.

    The report carries per-epoch mean loss and training-set F1, wall time,
    and a checksum of the final parameters.
    """
    from .metrics import score_records

    if not train_records:
        raise ValueError("empty training set")
    started = time.perf_counter()
    encodings, targets = _encode_training_set(task, vocab, train_records, cfg)
    n = len(encodings)

    if task.setting is TaskSetting.WORD_LEVEL and task.readout == "mask":
        readout = np.array(
            [_mask_position(e, vocab.mask_id) for e in encodings], dtype=np.int64
        )
    else:
        readout = np.zeros(n, dtype=np.int64)

    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    train_rng = np.random.default_rng([cfg.seed, 2])
    optim = AdamW(cfg.learning_rate, cfg.weight_decay)
    report = TrainReport()

    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        total_count = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = stack_encodings([encodings[i] for i in idx], trim=True)
            if task.setting is TaskSetting.SEQUENCE_LABELING:
                loss, count, grads = _token_loss_and_grads(
                    model, batch, [targets[i] for i in idx], train_rng
                )
            else:
                loss, count, grads = _classification_loss_and_grads(
                    model, batch, [targets[i] for i in idx], train_rng, readout[idx]
                )
            if not np.isfinite(loss) or loss < 0:
                raise FloatingPointError(f"non-finite or negative loss {loss}")
            optim.step(model.params, grads)
            total_loss += loss * count
            total_count += count
        report.epoch_losses.append(total_loss / max(total_count, 1))
        _, _, epoch_f1, _ = score_records(model, task, train_records, vocab, cfg.max_len)
        report.epoch_train_f1.append(epoch_f1)

    report.wall_seconds = time.perf_counter() - started
    report.param_checksum = model.checksum()
    return model, report


def _mask_position(enc, mask_id: int) -> int:
    for pos, (t, s, m) in enumerate(zip(enc.token_ids, enc.segment_ids, enc.attention_mask)):
        if m == 1 and s == 0 and t == mask_id:
            return pos
    return 0


# --- gradient checking -----------------------------------------------------

GRAD_CHECK_BLOCKS = (
    "layer_norm",
    "gelu",
    "masked_softmax",
    "embeddings",
    "attention",
    "ffn",
    "classifier_head",
    "token_head",
)


def vector_relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6
) -> float:
    """Norm-relative gradient error: ||a - n|| / (||a|| + ||n|| + floor).

    The floor keeps genuinely zero-gradient parameters from tripping the
    check on finite-difference noise alone. (The key-projection bias is
    one such parameter: it shifts every attention score in a query row by
    the same constant, which the row softmax cancels exactly.)
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(b) + floor
    return float(np.linalg.norm(a - b) / denom)


def finite_difference(loss_fn: Callable[[], float], tensor: np.ndarray, eps: float) -> np.ndarray:
    """Central differences, mutating and restoring one coordinate at a time."""
    grad = np.zeros_like(tensor)
    flat = tensor.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn()
        flat[i] = orig - eps
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def _small_setup(seed: int, task_setting: TaskSetting):
    rng = np.random.default_rng([seed, 3])
    cfg = EncoderConfig(
        layers=1, heads=2, hidden=8, ff_dim=16, max_len=8, vocab_size=12,
        dropout_rate=0.0, seed=seed,
    )
    model = init_model(cfg, num_classes=2)
    # Scale the embedding tables up so the first layer norm sees inputs of
    # realistic magnitude; near-zero rows make its curvature huge and the
    # central differences needlessly noisy.
    for name in ("emb.tok", "emb.pos", "emb.seg"):
        model.params[name] *= 10.0
    B, L = 2, 6
    ids = rng.integers(0, cfg.vocab_size, size=(B, L))
    segs = np.zeros((B, L), dtype=np.int64)
    mask = np.ones((B, L), dtype=np.float64)
    mask[0, L - 1] = 0.0
    mask[1, L - 2 :] = 0.0
    from .encoder import Batch

    batch = Batch(ids, segs, mask)
    if task_setting is TaskSetting.SEQUENCE_LABELING:
        targets = rng.integers(0, 2, size=B * L)
        targets[0] = IGNORE_INDEX
    else:
        targets = rng.integers(0, 2, size=B)
    return model, batch, targets


def _model_loss_and_grads(model, batch, targets, token_level: bool):
    if token_level:
        out, cache = forward_batch(model, batch, want_cache=True)
        B, L, H = out.hidden_states.shape
        w, b = model.params["head.w"], model.params["head.b"]
        logits = out.hidden_states.reshape(B * L, H) @ w + b
        loss, _, dlogits = xent_with_grad(logits, targets)
        d_hidden = (dlogits @ w.T).reshape(B, L, H)
        grads = backward(model, cache, d_hidden)
        grads["head.w"] += out.hidden_states.reshape(B * L, H).T @ dlogits
        grads["head.b"] += dlogits.sum(axis=0)
        return loss, grads
    out, cache = forward_batch(model, batch, want_cache=True)
    pooled = out.hidden_states[:, 0, :]
    w, b = model.params["head.w"], model.params["head.b"]
    logits = pooled @ w + b
    loss, _, dlogits = xent_with_grad(logits, targets)
    d_hidden = np.zeros_like(out.hidden_states)
    d_hidden[:, 0, :] = dlogits @ w.T
    grads = backward(model, cache, d_hidden)
    grads["head.w"] += pooled.T @ dlogits
    grads["head.b"] += dlogits.sum(axis=0)
    return loss, grads


_BLOCK_PREFIXES = {
    "embeddings": ("emb.tok", "emb.pos", "emb.seg", "emb.ln.g", "emb.ln.b"),
    "attention": ("attn",),
    "ffn": ("ffn",),
    "classifier_head": ("head.w", "head.b"),
    "token_head": ("head.w", "head.b"),
}


def _matches_block(name: str, block: str) -> bool:
    return any(part in name for part in _BLOCK_PREFIXES[block])


def grad_check(block: str, seed: int = 0, eps: float = 1e-3) -> float:
    """Max norm-relative error between analytic and central-finite-difference
    gradients for one block. Small configurations only (hidden 8)."""
    rng = np.random.default_rng([seed, 4])

    if block == "layer_norm":
        x = rng.normal(size=(5, 8))
        gain = rng.normal(1.0, 0.1, size=8)
        bias = rng.normal(0.0, 0.1, size=8)
        probe = rng.normal(size=(5, 8))

        def loss_fn():
            y, _, _ = kernels.layer_norm(np.ascontiguousarray(x), gain, bias, 1e-12)
            return float((y * probe).sum())

        y, mean, rstd = kernels.layer_norm(np.ascontiguousarray(x), gain, bias, 1e-12)
        dx, dgain, dbias = kernels.layer_norm_backward(probe, x, gain, mean, rstd)
        errs = [
            vector_relative_error(dx, finite_difference(loss_fn, x, eps)),
            vector_relative_error(dgain, finite_difference(loss_fn, gain, eps)),
            vector_relative_error(dbias, finite_difference(loss_fn, bias, eps)),
        ]
        return max(errs)

    if block == "gelu":
        x = rng.normal(size=(4, 7))
        probe = rng.normal(size=(4, 7))

        def loss_fn():
            return float((kernels.gelu(x) * probe).sum())

        dx = kernels.gelu_backward(probe, x)
        return vector_relative_error(dx, finite_difference(loss_fn, x, eps))

    if block == "masked_softmax":
        scores = rng.normal(size=(2, 6, 5))
        mask = np.ones((2, 5))
        mask[0, 4] = 0.0
        mask[1, 2] = 0.0
        probe = rng.normal(size=(2, 6, 5))

        def loss_fn():
            p = kernels.masked_softmax(np.ascontiguousarray(scores), mask)
            return float((p * probe).sum())

        probs = kernels.masked_softmax(np.ascontiguousarray(scores), mask)
        dscores = kernels.masked_softmax_backward(
            np.ascontiguousarray(probe * mask[:, None, :]), probs
        )
        return vector_relative_error(dscores, finite_difference(loss_fn, scores, eps))

    if block in _BLOCK_PREFIXES:
        token_level = block == "token_head"
        setting = TaskSetting.SEQUENCE_LABELING if token_level else TaskSetting.SENTENCE_LEVEL
        model, batch, targets = _small_setup(seed, setting)
        _, grads = _model_loss_and_grads(model, batch, targets, token_level)

        worst = 0.0
        for name, tensor in model.params.items():
            if not _matches_block(name, block):
                continue

            def loss_fn():
                loss, _ = _model_loss_and_grads(model, batch, targets, token_level)
                return loss

            numeric = finite_difference(loss_fn, tensor, eps)
            worst = max(worst, vector_relative_error(grads[name], numeric))
        return worst

    raise ValueError(f"unknown block {block!r}; known: {GRAD_CHECK_BLOCKS}")


def grad_check_all(seeds: Iterable[int] = range(5), eps: float = 1e-3) -> dict[str, float]:
    """Max error per block across seeds."""
    results = {}
    for block in GRAD_CHECK_BLOCKS:
        results[block] = max(grad_check(block, seed=s, eps=eps) for s in seeds)
    return results
