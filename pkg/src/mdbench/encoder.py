"""A small transformer encoder with hand-written forward and backward passes.

Post-layer-norm residual blocks over summed token + position + segment
embeddings, multi-head self-attention with additive-free exact masking
(masked keys receive attention weight exactly 0), GELU feed-forward, and
a linear prediction head. Everything runs in float64 numpy; the row
softmax, layer norm and GELU go through the selected kernel backend.

Checkpoints are zip archives holding the config as JSON plus one raw
little-endian float32 buffer per named tensor.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .tokenization import InputEncoding

LN_EPS = 1e-12
INIT_STD = 0.02


class CheckpointError(ValueError):
    """Checkpoint archive does not match the declared configuration."""


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 4
    heads: int = 4
    hidden: int = 128
    ff_dim: int = 256
    max_len: int = 128
    vocab_size: int = 1000
    dropout_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        positives = {
            "layers": self.layers,
            "heads": self.heads,
            "hidden": self.hidden,
            "ff_dim": self.ff_dim,
            "max_len": self.max_len,
            "vocab_size": self.vocab_size,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    @classmethod
    def desk(cls, vocab_size: int = 1000, **overrides) -> "EncoderConfig":
        """Trainable-from-scratch defaults: 4 layers, 4 heads, hidden 128."""
        return cls(vocab_size=vocab_size, **overrides)

    @classmethod
    def full_scale(cls, vocab_size: int = 30000, **overrides) -> "EncoderConfig":
        """12 layers, 12 heads, hidden 768: valid but needs pretraining to be useful."""
        args = dict(layers=12, heads=12, hidden=768, ff_dim=3072, vocab_size=vocab_size)
        args.update(overrides)
        return cls(**args)


def param_shapes(cfg: EncoderConfig, num_classes: int = 2) -> dict[str, tuple[int, ...]]:
    """Named tensor shapes; a pure function of the configuration."""
    h, f = cfg.hidden, cfg.ff_dim
    shapes: dict[str, tuple[int, ...]] = {
        "emb.tok": (cfg.vocab_size, h),
        "emb.pos": (cfg.max_len, h),
        "emb.seg": (2, h),
        "emb.ln.g": (h,),
        "emb.ln.b": (h,),
    }
    for i in range(cfg.layers):
        p = f"l{i}"
        shapes[f"{p}.attn.wq"] = (h, h)
        shapes[f"{p}.attn.bq"] = (h,)
        shapes[f"{p}.attn.wk"] = (h, h)
        shapes[f"{p}.attn.bk"] = (h,)
        shapes[f"{p}.attn.wv"] = (h, h)
        shapes[f"{p}.attn.bv"] = (h,)
        shapes[f"{p}.attn.wo"] = (h, h)
        shapes[f"{p}.attn.bo"] = (h,)
        shapes[f"{p}.attn.ln.g"] = (h,)
        shapes[f"{p}.attn.ln.b"] = (h,)
        shapes[f"{p}.ffn.w1"] = (h, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, h)
        shapes[f"{p}.ffn.b2"] = (h,)
        shapes[f"{p}.ffn.ln.g"] = (h,)
        shapes[f"{p}.ffn.ln.b"] = (h,)
    shapes["head.w"] = (h, num_classes)
    shapes["head.b"] = (num_classes,)
    return shapes


def param_count(cfg: EncoderConfig, num_classes: int = 2) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg, num_classes).values())


@dataclass
class EncoderModel:
    cfg: EncoderConfig
    num_classes: int
    params: dict[str, np.ndarray]

    def checksum(self) -> str:
        import hashlib

        digest = hashlib.sha256()
        for name in sorted(self.params):
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(self.params[name]).tobytes())
        return digest.hexdigest()


def init_model(cfg: EncoderConfig, num_classes: int = 2) -> EncoderModel:
    """Seeded parameter initialization: N(0, 0.02^2) weights, zero biases,
    unit layer-norm gains. Identical config gives bit-identical parameters."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    rng = np.random.default_rng([cfg.seed, 0xE17C0DE])
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg, num_classes).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            params[name] = np.ones(shape)
        elif leaf.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, INIT_STD, size=shape)
    return EncoderModel(cfg=cfg, num_classes=num_classes, params=params)


@dataclass
class Batch:
    """Stacked encodings as numpy arrays. ``mask`` is float 0/1 per position."""

    token_ids: np.ndarray
    segment_ids: np.ndarray
    mask: np.ndarray
    encodings: list[InputEncoding] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def seq_len(self) -> int:
        return self.token_ids.shape[1]


def stack_encodings(encodings: list[InputEncoding], trim: bool = False) -> Batch:
    """Stack same-length encodings; optionally slice off all-padding columns.

    Trimming never changes any output (masked keys carry exactly zero
    attention weight), it only saves work.
    """
    if not encodings:
        raise ValueError("empty batch")
    length = encodings[0].length
    if any(e.length != length for e in encodings):
        raise ValueError("encodings in a batch must share one length")
    ids = np.array([e.token_ids for e in encodings], dtype=np.int64)
    segs = np.array([e.segment_ids for e in encodings], dtype=np.int64)
    mask = np.array([e.attention_mask for e in encodings], dtype=np.float64)
    if trim:
        used = int(max(e.used for e in encodings))
        ids, segs, mask = ids[:, :used], segs[:, :used], mask[:, :used]
    return Batch(ids, segs, mask, list(encodings))


@dataclass
class EncoderOutput:
    """Hidden states plus the attention snapshot of the final layer.

    For a single encoding the shapes are [L, H] and [heads, L, L]; batched
    calls add a leading batch axis. ``all_attentions`` is populated only
    when the forward pass is asked for every layer.
    """

    hidden_states: np.ndarray
    last_layer_attention: np.ndarray
    all_attentions: list[np.ndarray] | None = None


def _dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None):
    if rate <= 0.0 or rng is None:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * keep, keep


def embed(model: EncoderModel, enc: InputEncoding) -> np.ndarray:
    """Layer-normalized sum of token, position and segment embeddings, [L, H]."""
    batch = stack_encodings([enc])
    x, _ = _embed_batch(model, batch, rng=None)
    return x[0]


def _embed_batch(model: EncoderModel, batch: Batch, rng):
    p = model.params
    ids, segs = batch.token_ids, batch.segment_ids
    if ids.max() >= model.cfg.vocab_size or ids.min() < 0:
        raise ValueError(
            f"token id out of range for vocab_size={model.cfg.vocab_size}"
        )
    L = batch.seq_len
    if L > model.cfg.max_len:
        raise ValueError(f"sequence length {L} exceeds max_len {model.cfg.max_len}")
    summed = p["emb.tok"][ids] + p["emb.pos"][:L][None, :, :] + p["emb.seg"][segs]
    B, _, H = summed.shape
    y, mean, rstd = kernels.layer_norm(
        np.ascontiguousarray(summed.reshape(B * L, H)), p["emb.ln.g"], p["emb.ln.b"], LN_EPS
    )
    y = y.reshape(B, L, H)
    y, keep = _dropout(y, model.cfg.dropout_rate, rng)
    cache = {"ids": ids, "segs": segs, "summed": summed, "mean": mean, "rstd": rstd, "keep": keep}
    return y, cache


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    B, L, H = x.shape
    return x.reshape(B, L, heads, H // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    B, nh, L, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, nh * dh)


def _layer_forward(model: EncoderModel, i: int, x: np.ndarray, key_mask: np.ndarray, rng):
    p = model.params
    cfg = model.cfg
    B, L, H = x.shape
    pre = f"l{i}"

    q = x @ p[f"{pre}.attn.wq"] + p[f"{pre}.attn.bq"]
    k = x @ p[f"{pre}.attn.wk"] + p[f"{pre}.attn.bk"]
    v = x @ p[f"{pre}.attn.wv"] + p[f"{pre}.attn.bv"]
    qh, kh, vh = (_split_heads(t, cfg.heads) for t in (q, k, v))
    scale = 1.0 / np.sqrt(cfg.head_dim)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    probs = kernels.masked_softmax(
        np.ascontiguousarray(scores.reshape(B, cfg.heads * L, L)),
        np.ascontiguousarray(key_mask),
    ).reshape(B, cfg.heads, L, L)
    ctx = _merge_heads(probs @ vh)
    attn_out = ctx @ p[f"{pre}.attn.wo"] + p[f"{pre}.attn.bo"]
    attn_out, keep1 = _dropout(attn_out, cfg.dropout_rate, rng)
    res1 = x + attn_out
    n1, mean1, rstd1 = kernels.layer_norm(
        np.ascontiguousarray(res1.reshape(B * L, H)),
        p[f"{pre}.attn.ln.g"],
        p[f"{pre}.attn.ln.b"],
        LN_EPS,
    )
    n1 = n1.reshape(B, L, H)

    a = n1 @ p[f"{pre}.ffn.w1"] + p[f"{pre}.ffn.b1"]
    g = kernels.gelu(a)
    ffn_out = g @ p[f"{pre}.ffn.w2"] + p[f"{pre}.ffn.b2"]
    ffn_out, keep2 = _dropout(ffn_out, cfg.dropout_rate, rng)
    res2 = n1 + ffn_out
    n2, mean2, rstd2 = kernels.layer_norm(
        np.ascontiguousarray(res2.reshape(B * L, H)),
        p[f"{pre}.ffn.ln.g"],
        p[f"{pre}.ffn.ln.b"],
        LN_EPS,
    )
    n2 = n2.reshape(B, L, H)

    cache = {
        "x": x, "qh": qh, "kh": kh, "vh": vh, "probs": probs, "ctx": ctx,
        "keep1": keep1, "res1": res1, "mean1": mean1, "rstd1": rstd1, "n1": n1,
        "a": a, "g": g, "keep2": keep2, "res2": res2, "mean2": mean2, "rstd2": rstd2,
    }
    return n2, probs, cache


def forward_batch(
    model: EncoderModel,
    batch: Batch,
    train: bool = False,
    rng: np.random.Generator | None = None,
    collect: str = "last",
    want_cache: bool = False,
):
    """Run the encoder over a batch. ``collect`` is one of last/all/none."""
    drop_rng = rng if train else None
    x, emb_cache = _embed_batch(model, batch, drop_rng)
    attentions = []
    layer_caches = []
    probs = None
    for i in range(model.cfg.layers):
        x, probs, cache = _layer_forward(model, i, x, batch.mask, drop_rng)
        if want_cache:
            layer_caches.append(cache)
        if collect == "all":
            attentions.append(probs)
    out = EncoderOutput(
        hidden_states=x,
        last_layer_attention=probs,
        all_attentions=attentions if collect == "all" else None,
    )
    if want_cache:
        return out, {"emb": emb_cache, "layers": layer_caches, "batch": batch}
    return out


def forward(
    model: EncoderModel,
    enc: InputEncoding,
    collect: str = "last",
) -> EncoderOutput:
    """Inference-mode forward for one encoding (dropout off, deterministic).

    The encoding is trimmed to its used length first. Besides skipping
    dead work, this is what makes outputs exactly independent of how much
    padding the encoding carries: identical content reaches the math
    library with identical shapes, so every rounding decision is the same.
    """
    out = forward_batch(model, stack_encodings([enc], trim=True), train=False, collect=collect)
    return EncoderOutput(
        hidden_states=out.hidden_states[0],
        last_layer_attention=out.last_layer_attention[0],
        all_attentions=None if out.all_attentions is None else [a[0] for a in out.all_attentions],
    )


def pool_cls(out: EncoderOutput) -> np.ndarray:
    """Hidden state at position 0 (the leading classification token)."""
    return out.hidden_states[..., 0, :]


def _layer_backward(model: EncoderModel, i: int, cache: dict, dy: np.ndarray, grads):
    p = model.params
    cfg = model.cfg
    pre = f"l{i}"
    c = cache
    B, L, H = c["x"].shape

    dres2, dg2, db2 = kernels.layer_norm_backward(
        np.ascontiguousarray(dy.reshape(B * L, H)),
        np.ascontiguousarray(c["res2"].reshape(B * L, H)),
        p[f"{pre}.ffn.ln.g"], c["mean2"], c["rstd2"],
    )
    grads[f"{pre}.ffn.ln.g"] += dg2
    grads[f"{pre}.ffn.ln.b"] += db2
    dres2 = dres2.reshape(B, L, H)

    dffn = dres2 if c["keep2"] is None else dres2 * c["keep2"]
    g2d = c["g"].reshape(B * L, -1)
    grads[f"{pre}.ffn.w2"] += g2d.T @ dffn.reshape(B * L, H)
    grads[f"{pre}.ffn.b2"] += dffn.sum(axis=(0, 1))
    dg = dffn @ p[f"{pre}.ffn.w2"].T
    da = kernels.gelu_backward(dg, c["a"])
    n1_2d = c["n1"].reshape(B * L, H)
    grads[f"{pre}.ffn.w1"] += n1_2d.T @ da.reshape(B * L, -1)
    grads[f"{pre}.ffn.b1"] += da.sum(axis=(0, 1))
    dn1 = dres2 + da @ p[f"{pre}.ffn.w1"].T

    dres1, dg1, db1 = kernels.layer_norm_backward(
        np.ascontiguousarray(dn1.reshape(B * L, H)),
        np.ascontiguousarray(c["res1"].reshape(B * L, H)),
        p[f"{pre}.attn.ln.g"], c["mean1"], c["rstd1"],
    )
    grads[f"{pre}.attn.ln.g"] += dg1
    grads[f"{pre}.attn.ln.b"] += db1
    dres1 = dres1.reshape(B, L, H)

    dattn = dres1 if c["keep1"] is None else dres1 * c["keep1"]
    ctx2d = c["ctx"].reshape(B * L, H)
    grads[f"{pre}.attn.wo"] += ctx2d.T @ dattn.reshape(B * L, H)
    grads[f"{pre}.attn.bo"] += dattn.sum(axis=(0, 1))
    dctx = _split_heads(dattn @ p[f"{pre}.attn.wo"].T, cfg.heads)

    dprobs = dctx @ c["vh"].transpose(0, 1, 3, 2)
    dvh = c["probs"].transpose(0, 1, 3, 2) @ dctx
    dscores = kernels.masked_softmax_backward(
        np.ascontiguousarray(dprobs.reshape(B, cfg.heads * L, L)),
        np.ascontiguousarray(c["probs"].reshape(B, cfg.heads * L, L)),
    ).reshape(B, cfg.heads, L, L)
    scale = 1.0 / np.sqrt(cfg.head_dim)
    dqh = (dscores @ c["kh"]) * scale
    dkh = (dscores.transpose(0, 1, 3, 2) @ c["qh"]) * scale

    dq, dk, dv = (_merge_heads(t) for t in (dqh, dkh, dvh))
    x2d = c["x"].reshape(B * L, H)
    dx = dres1
    for name, dt in (("wq", dq), ("wk", dk), ("wv", dv)):
        dt2d = dt.reshape(B * L, H)
        grads[f"{pre}.attn.{name}"] += x2d.T @ dt2d
        grads[f"{pre}.attn.b{name[1]}"] += dt2d.sum(axis=0)
        dx = dx + dt @ p[f"{pre}.attn.{name}"].T
    return dx


def backward(model: EncoderModel, cache: dict, d_hidden: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every encoder parameter, given the
    loss gradient at the final hidden states."""
    grads = {n: np.zeros_like(t) for n, t in model.params.items()}
    dy = d_hidden
    for i in reversed(range(model.cfg.layers)):
        dy = _layer_backward(model, i, cache["layers"][i], dy, grads)

    emb = cache["emb"]
    if emb["keep"] is not None:
        dy = dy * emb["keep"]
    B, L, H = dy.shape
    dsum, dg, db = kernels.layer_norm_backward(
        np.ascontiguousarray(dy.reshape(B * L, H)),
        np.ascontiguousarray(emb["summed"].reshape(B * L, H)),
        model.params["emb.ln.g"], emb["mean"], emb["rstd"],
    )
    grads["emb.ln.g"] += dg
    grads["emb.ln.b"] += db
    dsum = dsum.reshape(B, L, H)
    np.add.at(grads["emb.tok"], emb["ids"], dsum)
    grads["emb.pos"][:L] += dsum.sum(axis=0)
    np.add.at(grads["emb.seg"], emb["segs"], dsum)
    return grads


def save_checkpoint(
    model: EncoderModel, path: str | Path, extras: dict[str, str] | None = None
) -> None:
    """Zip archive: config.json, manifest.json, and weights/<name> as raw
    little-endian float32 buffers. ``extras`` adds text files at the archive
    root (e.g. the training vocabulary); names may not collide with the
    reserved entries."""
    path = Path(path)
    manifest = {name: list(t.shape) for name, t in model.params.items()}
    config = {"encoder": asdict(model.cfg), "num_classes": model.num_classes}
    extras = extras or {}
    reserved = {"config.json", "manifest.json"}
    for name in extras:
        if name in reserved or name.startswith("weights/"):
            raise ValueError(f"extra file name {name!r} collides with a reserved entry")
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("config.json", json.dumps(config, indent=2))
        zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        for name in sorted(model.params):
            buf = np.ascontiguousarray(model.params[name], dtype="<f4").tobytes()
            zf.writestr(f"weights/{name}", buf)
        for name in sorted(extras):
            zf.writestr(name, extras[name])


def checkpoint_extra(path: str | Path, name: str) -> str | None:
    """Read one extra text file out of a checkpoint, or None if absent."""
    with zipfile.ZipFile(Path(path), "r") as zf:
        if name not in zf.namelist():
            return None
        return zf.read(name).decode("utf-8")


def load_checkpoint(path: str | Path) -> EncoderModel:
    path = Path(path)
    with zipfile.ZipFile(path, "r") as zf:
        config = json.loads(zf.read("config.json"))
        manifest = json.loads(zf.read("manifest.json"))
        cfg = EncoderConfig(**config["encoder"])
        num_classes = int(config["num_classes"])
        expected = param_shapes(cfg, num_classes)
        if set(manifest) != set(expected):
            missing = sorted(set(expected) - set(manifest))
            extra = sorted(set(manifest) - set(expected))
            raise CheckpointError(f"{path}: tensor set mismatch (missing {missing}, extra {extra})")
        params: dict[str, np.ndarray] = {}
        for name, shape in expected.items():
            declared = tuple(manifest[name])
            if declared != shape:
                raise CheckpointError(
                    f"{path}: tensor {name} has shape {declared}, config implies {shape}"
                )
            raw = zf.read(f"weights/{name}")
            n = int(np.prod(shape))
            if len(raw) != 4 * n:
                raise CheckpointError(f"{path}: tensor {name} has {len(raw)} bytes, expected {4*n}")
            params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    return EncoderModel(cfg=cfg, num_classes=num_classes, params=params)
