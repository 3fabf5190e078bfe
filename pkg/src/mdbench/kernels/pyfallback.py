"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled module: float64 C-contiguous arrays in,
new arrays out. Masked key positions come out of the softmax as exact
zeros, which is what makes padding invisible to the rest of the model.
"""

from __future__ import annotations

import numpy as np

_GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_C1 = 0.044715


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float):
    """Normalize rows of x [N, H]. Returns (y, mean, rstd)."""
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean[:, None]) * rstd[:, None] * gain + bias
    return y, mean, rstd


def layer_norm_backward(dy, x, gain, mean, rstd):
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    return dx, dgain, dbias


def masked_softmax(scores: np.ndarray, key_mask: np.ndarray) -> np.ndarray:
    """Row softmax over unmasked keys.

    scores: [B, R, L] where every row of batch item b shares key_mask[b].
    key_mask: [B, L] with 1.0 on real positions. Masked entries are exactly
    0 in the result; a fully masked row comes out all zeros.
    """
    mask = key_mask[:, None, :]
    shifted = np.where(mask > 0, scores, -np.inf)
    peak = shifted.max(axis=2, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    e = np.exp(shifted - peak)
    e = np.where(mask > 0, e, 0.0)
    denom = e.sum(axis=2, keepdims=True)
    return np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)


def masked_softmax_backward(dprobs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    inner = (dprobs * probs).sum(axis=2, keepdims=True)
    return probs * (dprobs - inner)


def gelu(x: np.ndarray) -> np.ndarray:
    u = _GELU_C0 * (x + _GELU_C1 * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    u = _GELU_C0 * (x + _GELU_C1 * x * x * x)
    t = np.tanh(u)
    du = _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
