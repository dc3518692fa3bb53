"""Bags of local feature vectors and their binary serialization (`DSC1`)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DecodeError

_MAGIC = b"DSC1"


@dataclass
class DescriptorSet:
    """N local feature vectors plus (x, y, scale) geometry per vector."""

    vectors: np.ndarray                 # N x D float32
    geometry: np.ndarray = field(default=None)  # N x 3 float32: x, y, scale

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise ValueError("DescriptorSet vectors must be 2-D (N x D)")
        if self.geometry is None:
            self.geometry = np.zeros((len(self.vectors), 3), dtype=np.float32)
        self.geometry = np.ascontiguousarray(self.geometry, dtype=np.float32)
        if self.geometry.shape != (len(self.vectors), 3):
            raise ValueError("DescriptorSet geometry must be N x 3")

    def __len__(self):
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def save_descriptors(path: str, ds: DescriptorSet) -> None:
    """Write little-endian `DSC1`: magic, dim u32, count u64, vectors, geometry."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", ds.dim, len(ds)))
        fh.write(ds.vectors.astype("<f4").tobytes())
        fh.write(ds.geometry.astype("<f4").tobytes())


def load_descriptors(path: str) -> DescriptorSet:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DecodeError(f"{path}: not a DSC1 descriptor file")
        dim, count = struct.unpack("<IQ", fh.read(12))
        vec = np.frombuffer(fh.read(4 * dim * count), dtype="<f4")
        geo = np.frombuffer(fh.read(4 * 3 * count), dtype="<f4")
    if vec.size != dim * count or geo.size != 3 * count:
        raise DecodeError(f"{path}: truncated DSC1 payload")
    return DescriptorSet(vec.reshape(count, dim).copy(), geo.reshape(count, 3).copy())
