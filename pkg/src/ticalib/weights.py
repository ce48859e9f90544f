"""TICW weight-bundle container and binary file format.

File layout, little-endian:
    magic "TICW", u32 version=1, u8 flags (bit0: positional encoding,
    bit1: pre-norm), u32 tensor count; per tensor: u16 name length,
    UTF-8 name, u8 rank, u32 dims[rank], f32 data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

TICW_MAGIC = b"TICW"
TICW_VERSION = 1

FLAG_POSITIONAL_ENCODING = 0x01
FLAG_PRE_NORM = 0x02

EMBED_DIM = 256
ATTN_HEADS = 8
FFN_DIM = 512
ENCODER_BLOCKS = 3


class WeightFormatError(ValueError):
    """Missing tensor, wrong shape, or malformed TICW file."""


def _block_shapes(prefix: str) -> dict[str, tuple]:
    d, f = EMBED_DIM, FFN_DIM
    shapes = {}
    for part in ("q", "k", "v", "out"):
        shapes[f"{prefix}.attn.{part}.weight"] = (d, d)
        shapes[f"{prefix}.attn.{part}.bias"] = (d,)
    for ln in ("ln1", "ln2"):
        shapes[f"{prefix}.{ln}.gamma"] = (d,)
        shapes[f"{prefix}.{ln}.beta"] = (d,)
    shapes[f"{prefix}.ffn.w1"] = (f, d)
    shapes[f"{prefix}.ffn.b1"] = (f,)
    shapes[f"{prefix}.ffn.w2"] = (d, f)
    shapes[f"{prefix}.ffn.b2"] = (d,)
    return shapes


def required_tensor_shapes(sensors: int) -> dict[str, tuple]:
    """Name -> shape map for a bundle serving S sensors (features = 12*S)."""
    shapes = {
        "embed.weight": (EMBED_DIM, 12 * sensors),
        "embed.bias": (EMBED_DIM,),
    }
    for i in range(ENCODER_BLOCKS):
        shapes.update(_block_shapes(f"enc{i}"))
    for head in ("tpm_d", "tpm_o"):
        shapes.update(_block_shapes(f"{head}.enc"))
        shapes[f"{head}.out.weight"] = (6 * sensors, EMBED_DIM)
        shapes[f"{head}.out.bias"] = (6 * sensors,)
    return shapes


@dataclass
class WeightBundle:
    """Named f32 tensors for TIC inference plus architecture flags."""

    tensors: dict[str, np.ndarray]
    positional_encoding: bool = True
    pre_norm: bool = True

    @property
    def sensors(self) -> int:
        w = self.tensors.get("tpm_d.out.weight")
        if w is None:
            raise WeightFormatError("missing tensor: tpm_d.out.weight")
        return w.shape[0] // 6

    def validate(self) -> None:
        expected = required_tensor_shapes(self.sensors)
        for name, shape in expected.items():
            if name not in self.tensors:
                raise WeightFormatError(f"missing tensor: {name}")
            got = self.tensors[name].shape
            if tuple(got) != shape:
                raise WeightFormatError(f"tensor {name} has shape {got}, expected {shape}")
        for name, arr in self.tensors.items():
            if not np.all(np.isfinite(arr)):
                raise WeightFormatError(f"tensor {name} contains NaN/Inf")


def save_weights(bundle: WeightBundle, path) -> None:
    flags = 0
    if bundle.positional_encoding:
        flags |= FLAG_POSITIONAL_ENCODING
    if bundle.pre_norm:
        flags |= FLAG_PRE_NORM
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIBI", TICW_MAGIC, TICW_VERSION, flags, len(bundle.tensors)))
        for name, arr in bundle.tensors.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def load_weights(path) -> WeightBundle:
    with open(path, "rb") as f:
        head = f.read(struct.calcsize("<4sIBI"))
        if len(head) < struct.calcsize("<4sIBI"):
            raise WeightFormatError(f"{path}: truncated header")
        magic, version, flags, count = struct.unpack("<4sIBI", head)
        if magic != TICW_MAGIC:
            raise WeightFormatError(f"{path}: bad magic {magic!r}")
        if version != TICW_VERSION:
            raise WeightFormatError(f"{path}: unsupported version {version}")
        tensors = {}
        for _ in range(count):
            raw = f.read(2)
            if len(raw) < 2:
                raise WeightFormatError(f"{path}: truncated tensor header")
            (name_len,) = struct.unpack("<H", raw)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            nbytes = 4 * int(np.prod(dims)) if rank else 4
            buf = f.read(nbytes)
            if len(buf) < nbytes:
                raise WeightFormatError(f"{path}: truncated tensor data for {name}")
            tensors[name] = np.frombuffer(buf, dtype="<f4").reshape(dims).astype(np.float32)
    bundle = WeightBundle(
        tensors=tensors,
        positional_encoding=bool(flags & FLAG_POSITIONAL_ENCODING),
        pre_norm=bool(flags & FLAG_PRE_NORM),
    )
    bundle.validate()
    return bundle


def seeded_bundle(
    seed: int,
    sensors: int = 6,
    positional_encoding: bool = True,
    pre_norm: bool = True,
) -> WeightBundle:
    """Deterministic random bundle for golden tests.

    PRNG: numpy default_rng(seed); tensors drawn in the iteration order of
    required_tensor_shapes. Linear weights ~ N(0, 0.08), biases ~ N(0, 0.02),
    layer-norm gamma ~ 1 + N(0, 0.05), beta ~ N(0, 0.02).
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in required_tensor_shapes(sensors).items():
        if name.endswith(".gamma"):
            arr = 1.0 + 0.05 * rng.normal(size=shape)
        elif name.endswith((".beta", ".bias", ".b1", ".b2")):
            arr = 0.02 * rng.normal(size=shape)
        else:
            arr = 0.08 * rng.normal(size=shape)
        tensors[name] = arr.astype(np.float32)
    return WeightBundle(tensors=tensors, positional_encoding=positional_encoding, pre_norm=pre_norm)
