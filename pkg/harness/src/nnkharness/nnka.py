"""Harness-side NNKA v1 writer.

Written from the format description alone (little-endian: magic "NNKA",
u16 version, u64 step, u32 N, u32 C, C u32 dims, N u16 labels,
u16 num_classes, C row-major float32 matrices, trailing CRC32 of all
preceding bytes) so the harness does not import engine code.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np


def snapshot_payload(step: int, features: np.ndarray, labels: np.ndarray, num_classes: int = 2) -> bytes:
    """Serialize (N, C, D_c) activations plus labels into NNKA v1 bytes."""
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels)
    n, c, d = features.shape
    if labels.shape != (n,):
        raise ValueError(f"{labels.shape} labels for {n} rows")
    parts = [
        b"NNKA",
        struct.pack("<HQII", 1, step, n, c),
        struct.pack(f"<{c}I", *([d] * c)),
        labels.astype("<u2").tobytes(),
        struct.pack("<H", num_classes),
    ]
    for ch in range(c):
        parts.append(np.ascontiguousarray(features[:, ch, :]).astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def full_layer_payload(step: int, features: np.ndarray, labels: np.ndarray, num_classes: int = 2) -> bytes:
    """Single-channel payload carrying the concatenated layer vector."""
    features = np.asarray(features, dtype=np.float32)
    n = features.shape[0]
    flat = features.reshape(n, 1, -1)
    return snapshot_payload(step, flat, labels, num_classes)
