"""Numpy forward pass of the TIC transformer: encoder + two TPM heads.

Input features per frame: concatenated accelerations (S*3 values, divided
by 30) then orientations (S*9 values, row-major), 12*S total. Three encoder
blocks feed two heads (drift, offset), each an extra encoder block, a
temporal mean-pool, and a linear map to S 6D rotations.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from . import rotmath
from .weights import ATTN_HEADS, EMBED_DIM, ENCODER_BLOCKS, WeightBundle

ACCEL_SCALE = 30.0


class NumericalFailure(ArithmeticError):
    """NaN encountered in forward-pass activations."""


def window_features(orientations: np.ndarray, accels: np.ndarray) -> np.ndarray:
    """(n, S, 3, 3) + (n, S, 3) -> (n, 12*S) feature matrix."""
    n, s = accels.shape[:2]
    acc = (accels / ACCEL_SCALE).reshape(n, 3 * s)
    rot = orientations.reshape(n, 9 * s)
    return np.concatenate([acc, rot], axis=-1)


def sinusoidal_encoding(n: int, dim: int = EMBED_DIM) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(0, dim, 2)[None, :]
    angles = pos / np.power(10000.0, i / dim)
    pe = np.zeros((n, dim))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def _softmax(x: np.ndarray) -> np.ndarray:
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def _attention(x: np.ndarray, p, prefix: str) -> np.ndarray:
    n, d = x.shape
    heads = ATTN_HEADS
    hd = d // heads
    q = x @ p[f"{prefix}.attn.q.weight"].T + p[f"{prefix}.attn.q.bias"]
    k = x @ p[f"{prefix}.attn.k.weight"].T + p[f"{prefix}.attn.k.bias"]
    v = x @ p[f"{prefix}.attn.v.weight"].T + p[f"{prefix}.attn.v.bias"]
    q = q.reshape(n, heads, hd).transpose(1, 0, 2)
    k = k.reshape(n, heads, hd).transpose(1, 0, 2)
    v = v.reshape(n, heads, hd).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(hd)
    ctx = _softmax(scores) @ v
    ctx = ctx.transpose(1, 0, 2).reshape(n, d)
    return ctx @ p[f"{prefix}.attn.out.weight"].T + p[f"{prefix}.attn.out.bias"]


def _ffn(x: np.ndarray, p, prefix: str) -> np.ndarray:
    h = _gelu(x @ p[f"{prefix}.ffn.w1"].T + p[f"{prefix}.ffn.b1"])
    return h @ p[f"{prefix}.ffn.w2"].T + p[f"{prefix}.ffn.b2"]


def _encoder_block(x: np.ndarray, p, prefix: str, pre_norm: bool) -> np.ndarray:
    ln1 = (p[f"{prefix}.ln1.gamma"], p[f"{prefix}.ln1.beta"])
    ln2 = (p[f"{prefix}.ln2.gamma"], p[f"{prefix}.ln2.beta"])
    if pre_norm:
        x = x + _attention(_layer_norm(x, *ln1), p, prefix)
        x = x + _ffn(_layer_norm(x, *ln2), p, prefix)
    else:
        x = _layer_norm(x + _attention(x, p, prefix), *ln1)
        x = _layer_norm(x + _ffn(x, p, prefix), *ln2)
    return x


def forward_6d(
    orientations: np.ndarray, accels: np.ndarray, weights: WeightBundle
) -> tuple[np.ndarray, np.ndarray]:
    """Run the network; returns raw (drift_6d, offset_6d), each (S, 6).

    Computation is float64 on top of the stored f32 weights, in a fixed
    evaluation order, so identical inputs give bit-identical outputs.
    """
    weights.validate()
    s = weights.sensors
    if accels.shape[1] != s:
        raise WeightShapeMismatch(
            f"window has {accels.shape[1]} sensors, weights expect {s}"
        )
    p = {k: v.astype(np.float64) for k, v in weights.tensors.items()}
    x = window_features(orientations, accels)
    n = x.shape[0]
    h = x @ p["embed.weight"].T + p["embed.bias"]
    if weights.positional_encoding:
        h = h + sinusoidal_encoding(n)
    for i in range(ENCODER_BLOCKS):
        h = _encoder_block(h, p, f"enc{i}", weights.pre_norm)
    outs = []
    for head in ("tpm_d", "tpm_o"):
        g = _encoder_block(h, p, f"{head}.enc", weights.pre_norm)
        pooled = g.mean(axis=0)
        y = pooled @ p[f"{head}.out.weight"].T + p[f"{head}.out.bias"]
        if not np.all(np.isfinite(y)):
            raise NumericalFailure("numerical failure: NaN in forward pass")
        outs.append(y.reshape(s, 6))
    return outs[0], outs[1]


class WeightShapeMismatch(ValueError):
    """Window shape incompatible with the loaded weights."""


def decode_rotations(six_d: np.ndarray) -> np.ndarray:
    """(S, 6) raw head output -> (S, 3, 3) via Gram-Schmidt."""
    return np.stack([rotmath.mat_from_rot6d(v) for v in six_d])
