"""TICD dataset file reader and torch Dataset wrapper.

TICD layout, little-endian:
    magic "TICD", u32 version=1, u32 S, u32 n, u64 count
    per sample: n*S*12 f32 readings (per frame, per sensor: rotation
    row-major then acceleration), then S*12 f32 labels (per sensor:
    drift 6D then offset 6D).
"""

from __future__ import annotations

import struct

import numpy as np
import torch
from torch.utils.data import Dataset

TICD_MAGIC = b"TICD"
TICD_VERSION = 1
ACCEL_SCALE = 30.0

_HEADER = struct.Struct("<4sIIIQ")


class DatasetError(ValueError):
    """Malformed or truncated TICD file."""


def read_ticd(path):
    """Read a TICD file into (features, drift_6d, offset_6d) float32 arrays.

    features is (count, n, 12*S): per frame, accelerations divided by 30
    (3*S values) followed by flattened rotations (9*S values), matching
    the network's input layout.
    """
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DatasetError(f"{path}: truncated header")
        magic, version, sensors, n, count = _HEADER.unpack(head)
        if magic != TICD_MAGIC:
            raise DatasetError(f"{path}: bad magic {magic!r}")
        if version != TICD_VERSION:
            raise DatasetError(f"{path}: unsupported version {version}")
        rec = n * sensors * 12 * 4
        lab = sensors * 12 * 4
        feats = np.empty((count, n, 12 * sensors), dtype=np.float32)
        drift = np.empty((count, sensors, 6), dtype=np.float32)
        offset = np.empty((count, sensors, 6), dtype=np.float32)
        for i in range(count):
            buf = f.read(rec + lab)
            if len(buf) < rec + lab:
                raise DatasetError(f"{path}: truncated record {i}")
            readings = np.frombuffer(buf, dtype="<f4", count=n * sensors * 12).reshape(n, sensors, 12)
            labels = np.frombuffer(buf, dtype="<f4", offset=rec).reshape(sensors, 12)
            if not np.all(np.isfinite(readings)) or not np.all(np.isfinite(labels)):
                raise DatasetError(f"{path}: non-finite field in record {i}")
            acc = readings[:, :, 9:] / ACCEL_SCALE
            rot = readings[:, :, :9]
            feats[i] = np.concatenate(
                [acc.reshape(n, 3 * sensors), rot.reshape(n, 9 * sensors)], axis=-1
            )
            drift[i] = labels[:, :6]
            offset[i] = labels[:, 6:]
    return feats, drift, offset, sensors, n


class WindowDataset(Dataset):
    """Feature/label tensors from one or more TICD files."""

    def __init__(self, paths):
        if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__"):
            paths = [paths]
        feats, drifts, offsets = [], [], []
        self.sensors = None
        self.window = None
        for p in paths:
            f, d, o, s, n = read_ticd(p)
            if self.sensors is None:
                self.sensors, self.window = s, n
            elif (s, n) != (self.sensors, self.window):
                raise DatasetError(f"{p}: shape {n}x{s} differs from first file")
            feats.append(f)
            drifts.append(d)
            offsets.append(o)
        self.features = torch.from_numpy(np.concatenate(feats))
        self.drift_6d = torch.from_numpy(np.concatenate(drifts))
        self.offset_6d = torch.from_numpy(np.concatenate(offsets))

    def __len__(self):
        return self.features.shape[0]

    def __getitem__(self, i):
        return self.features[i], self.drift_6d[i], self.offset_6d[i]
