"""Torch implementation of the TIC network.

Architecture: linear embedding of 12*S per-frame features into 256 dims,
optional sinusoidal positional encoding, three transformer encoder blocks
(8 heads, FFN 512, GELU), then two prediction heads (drift, offset), each
one more encoder block, a temporal mean-pool, and a linear map to S 6D
rotation outputs. Tensor names line up one-to-one with the TICW format.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

EMBED_DIM = 256
ATTN_HEADS = 8
FFN_DIM = 512
ENCODER_BLOCKS = 3


def sinusoidal_encoding(n: int, dim: int = EMBED_DIM) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64)[:, None]
    i = torch.arange(0, dim, 2, dtype=torch.float64)[None, :]
    angles = pos / torch.pow(torch.tensor(10000.0, dtype=torch.float64), i / dim)
    pe = torch.zeros(n, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angles)
    pe[:, 1::2] = torch.cos(angles)
    return pe.float()


class EncoderBlock(nn.Module):
    def __init__(self, pre_norm: bool = True):
        super().__init__()
        d = EMBED_DIM
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.out = nn.Linear(d, d)
        self.ln1 = nn.LayerNorm(d)
        self.ln2 = nn.LayerNorm(d)
        self.w1 = nn.Linear(d, FFN_DIM)
        self.w2 = nn.Linear(FFN_DIM, d)
        self.pre_norm = pre_norm

    def _attention(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        hd = d // ATTN_HEADS
        q = self.q(x).view(b, n, ATTN_HEADS, hd).transpose(1, 2)
        k = self.k(x).view(b, n, ATTN_HEADS, hd).transpose(1, 2)
        v = self.v(x).view(b, n, ATTN_HEADS, hd).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
        ctx = torch.softmax(scores, dim=-1) @ v
        return self.out(ctx.transpose(1, 2).reshape(b, n, d))

    def _ffn(self, x: torch.Tensor) -> torch.Tensor:
        return self.w2(F.gelu(self.w1(x)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.pre_norm:
            x = x + self._attention(self.ln1(x))
            x = x + self._ffn(self.ln2(x))
        else:
            x = self.ln1(x + self._attention(x))
            x = self.ln2(x + self._ffn(x))
        return x

    def named_export(self, prefix: str) -> dict:
        p = {
            f"{prefix}.attn.q.weight": self.q.weight,
            f"{prefix}.attn.q.bias": self.q.bias,
            f"{prefix}.attn.k.weight": self.k.weight,
            f"{prefix}.attn.k.bias": self.k.bias,
            f"{prefix}.attn.v.weight": self.v.weight,
            f"{prefix}.attn.v.bias": self.v.bias,
            f"{prefix}.attn.out.weight": self.out.weight,
            f"{prefix}.attn.out.bias": self.out.bias,
            f"{prefix}.ln1.gamma": self.ln1.weight,
            f"{prefix}.ln1.beta": self.ln1.bias,
            f"{prefix}.ln2.gamma": self.ln2.weight,
            f"{prefix}.ln2.beta": self.ln2.bias,
            f"{prefix}.ffn.w1": self.w1.weight,
            f"{prefix}.ffn.b1": self.w1.bias,
            f"{prefix}.ffn.w2": self.w2.weight,
            f"{prefix}.ffn.b2": self.w2.bias,
        }
        return p


class TICNet(nn.Module):
    def __init__(self, sensors: int = 6, positional_encoding: bool = True, pre_norm: bool = True):
        super().__init__()
        self.sensors = sensors
        self.positional_encoding = positional_encoding
        self.pre_norm = pre_norm
        self.embed = nn.Linear(12 * sensors, EMBED_DIM)
        self.blocks = nn.ModuleList(EncoderBlock(pre_norm) for _ in range(ENCODER_BLOCKS))
        self.head_d = EncoderBlock(pre_norm)
        self.head_o = EncoderBlock(pre_norm)
        self.out_d = nn.Linear(EMBED_DIM, 6 * sensors)
        self.out_o = nn.Linear(EMBED_DIM, 6 * sensors)
        self._pe_cache = {}

    def forward(self, feats: torch.Tensor):
        """(B, n, 12*S) features -> ((B, S, 6) drift, (B, S, 6) offset)."""
        b, n, _ = feats.shape
        h = self.embed(feats)
        if self.positional_encoding:
            pe = self._pe_cache.get(n)
            if pe is None or pe.device != h.device:
                pe = sinusoidal_encoding(n).to(h.device)
                self._pe_cache[n] = pe
            h = h + pe
        for blk in self.blocks:
            h = blk(h)
        outs = []
        for head, lin in ((self.head_d, self.out_d), (self.head_o, self.out_o)):
            g = head(h).mean(dim=1)
            outs.append(lin(g).view(b, self.sensors, 6))
        return outs[0], outs[1]

    def export_tensors(self) -> dict:
        """Name -> float32 numpy array map in the TICW naming scheme."""
        named = {
            "embed.weight": self.embed.weight,
            "embed.bias": self.embed.bias,
        }
        for i, blk in enumerate(self.blocks):
            named.update(blk.named_export(f"enc{i}"))
        named.update(self.head_d.named_export("tpm_d.enc"))
        named.update(self.head_o.named_export("tpm_o.enc"))
        named["tpm_d.out.weight"] = self.out_d.weight
        named["tpm_d.out.bias"] = self.out_d.bias
        named["tpm_o.out.weight"] = self.out_o.weight
        named["tpm_o.out.bias"] = self.out_o.bias
        return {k: v.detach().cpu().numpy().astype(np.float32) for k, v in named.items()}

    def load_tensors(self, tensors: dict) -> None:
        """Inverse of export_tensors; raises KeyError/shape errors on mismatch."""
        expected = self.export_tensors()
        with torch.no_grad():
            named = {
                "embed.weight": self.embed.weight,
                "embed.bias": self.embed.bias,
                "tpm_d.out.weight": self.out_d.weight,
                "tpm_d.out.bias": self.out_d.bias,
                "tpm_o.out.weight": self.out_o.weight,
                "tpm_o.out.bias": self.out_o.bias,
            }
            for i, blk in enumerate(self.blocks):
                named.update(blk.named_export(f"enc{i}"))
            named.update(self.head_d.named_export("tpm_d.enc"))
            named.update(self.head_o.named_export("tpm_o.enc"))
            for name in expected:
                src = tensors[name]
                if tuple(src.shape) != tuple(named[name].shape):
                    raise ValueError(f"tensor {name}: shape {src.shape} != {tuple(named[name].shape)}")
                named[name].copy_(torch.from_numpy(np.ascontiguousarray(src, dtype=np.float32)))
