"""TICW weight-file writer/reader (trainer side).

Layout, little-endian: magic "TICW", u32 version=1, u8 flags (bit0
positional encoding, bit1 pre-norm), u32 tensor count; per tensor:
u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f32 data.
"""

from __future__ import annotations

import struct

import numpy as np

TICW_MAGIC = b"TICW"
TICW_VERSION = 1
FLAG_POSITIONAL_ENCODING = 0x01
FLAG_PRE_NORM = 0x02


class WeightFormatError(ValueError):
    pass


def save_ticw(tensors: dict, path, positional_encoding: bool = True, pre_norm: bool = True) -> None:
    flags = 0
    if positional_encoding:
        flags |= FLAG_POSITIONAL_ENCODING
    if pre_norm:
        flags |= FLAG_PRE_NORM
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIBI", TICW_MAGIC, TICW_VERSION, flags, len(tensors)))
        for name, arr in tensors.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def load_ticw(path) -> tuple[dict, bool, bool]:
    """Returns (tensors, positional_encoding, pre_norm)."""
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
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            nbytes = 4 * int(np.prod(dims)) if rank else 4
            buf = f.read(nbytes)
            if len(buf) < nbytes:
                raise WeightFormatError(f"{path}: truncated tensor {name}")
            tensors[name] = np.frombuffer(buf, dtype="<f4").reshape(dims).astype(np.float32)
    return tensors, bool(flags & FLAG_POSITIONAL_ENCODING), bool(flags & FLAG_PRE_NORM)
