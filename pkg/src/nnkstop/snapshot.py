"""NNKA v1 snapshot files: per-channel activation matrices plus labels.

Binary layout, little-endian, designed to be trivially writable from any
training framework:

    magic "NNKA" | u16 version=1 | u64 step | u32 N | u32 C
    | C x u32 dims | N x u16 labels | u16 num_classes
    | C row-major float32 matrices (N x D_c each)
    | u32 CRC32 of every preceding byte

A CSV fallback (one matrix file per channel plus labels and meta files in
a directory) exists for debuggability; the binary form is canonical.
Structural problems raise :class:`SnapshotFormatError` with the byte
offset; non-finite payload values raise :class:`SnapshotDataError` naming
the offending (channel, row) pairs.
"""

from __future__ import annotations

import io
import os
import re
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .interpolation import LabelSet

MAGIC = b"NNKA"
VERSION = 1


class SnapshotFormatError(ValueError):
    """Malformed NNKA payload. ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class SnapshotDataError(ValueError):
    """Structurally valid payload with invalid values (non-finite floats)."""

    def __init__(self, message: str, cells: Sequence[tuple[int, int]] = ()):
        self.cells = tuple(cells)
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class FeatureSnapshot:
    """Per-step, per-channel activation matrices with their labels."""

    step: int
    labels: LabelSet
    channels: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if self.step < 0:
            raise ValueError("step must be >= 0")
        if not self.channels:
            raise ValueError("snapshot needs at least one channel")
        mats = tuple(np.ascontiguousarray(np.asarray(ch, dtype=np.float32)) for ch in self.channels)
        object.__setattr__(self, "channels", mats)
        n = len(self.labels)
        for c, mat in enumerate(mats):
            if mat.ndim != 2 or mat.shape[1] < 1:
                raise ValueError(f"channel {c} must be a 2-D N x D matrix, got shape {mat.shape}")
            if mat.shape[0] != n:
                raise ValueError(f"channel {c} has {mat.shape[0]} rows for {n} labels")

    @property
    def N(self) -> int:
        return len(self.labels)

    @property
    def C(self) -> int:
        return len(self.channels)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(ch.shape[1]) for ch in self.channels)

    def full_layer_matrix(self) -> np.ndarray:
        """Concatenation of all channel subvectors, N x sum(dims)."""
        return np.concatenate(self.channels, axis=1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureSnapshot):
            return NotImplemented
        return (
            self.step == other.step
            and self.labels == other.labels
            and self.C == other.C
            and all(np.array_equal(a, b) for a, b in zip(self.channels, other.channels))
        )


def snapshot_to_bytes(snap: FeatureSnapshot) -> bytes:
    """Serialize to the NNKA v1 binary form."""
    if snap.labels.num_classes > 0xFFFF:
        raise ValueError("NNKA v1 stores num_classes as u16")
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<HQII", VERSION, snap.step, snap.N, snap.C))
    out.write(struct.pack(f"<{snap.C}I", *snap.dims))
    out.write(snap.labels.labels.astype("<u2").tobytes())
    out.write(struct.pack("<H", snap.labels.num_classes))
    for mat in snap.channels:
        out.write(mat.astype("<f4", copy=False).tobytes(order="C"))
    body = out.getvalue()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def write_snapshot(snap: FeatureSnapshot, dest) -> None:
    """Write the binary form to a path or binary stream."""
    data = snapshot_to_bytes(snap)
    if isinstance(dest, (str, Path)):
        with open(dest, "wb") as fh:
            fh.write(data)
    else:
        dest.write(data)
        dest.flush()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotFormatError(f"truncated while reading {what}", self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def snapshot_from_bytes(data: bytes) -> FeatureSnapshot:
    """Parse and validate an NNKA v1 payload."""
    rd = _Reader(data)
    magic = rd.take(4, "magic")
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}", 0)
    (version,) = rd.unpack("<H", "version")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported version {version}", 4)
    step, n, c = rd.unpack("<QII", "header")
    if n < 1 or c < 1:
        raise SnapshotFormatError(f"header requires N >= 1 and C >= 1, got N={n} C={c}", 14)
    dims_off = rd.pos
    dims = rd.unpack(f"<{c}I", "channel dims")
    if any(d < 1 for d in dims):
        raise SnapshotFormatError("zero-width channel dimension", dims_off)
    raw_labels = np.frombuffer(rd.take(2 * n, "labels"), dtype="<u2")
    (num_classes,) = rd.unpack("<H", "num_classes")
    if num_classes < 2:
        raise SnapshotFormatError(f"num_classes must be >= 2, got {num_classes}", rd.pos - 2)
    mats = []
    bad_cells: list[tuple[int, int]] = []
    for ch, d in enumerate(dims):
        block = rd.take(4 * n * d, f"channel {ch} payload")
        mat = np.frombuffer(block, dtype="<f4").reshape(n, d)
        finite = np.isfinite(mat)
        if not finite.all():
            bad_cells.extend((ch, int(row)) for row in np.unique(np.nonzero(~finite)[0]))
        mats.append(mat.copy())
    checksum_off = rd.pos
    (stored_crc,) = rd.unpack("<I", "checksum")
    if rd.pos != len(data):
        raise SnapshotFormatError(f"{len(data) - rd.pos} trailing bytes after checksum", rd.pos)
    actual_crc = zlib.crc32(data[:checksum_off]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise SnapshotFormatError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}", checksum_off
        )
    if bad_cells:
        listing = ", ".join(f"(channel {ch}, row {row})" for ch, row in bad_cells[:10])
        raise SnapshotDataError(f"non-finite activations at {listing}", bad_cells)
    if raw_labels.size and int(raw_labels.max()) >= num_classes:
        bad = int(np.argmax(raw_labels >= num_classes))
        raise SnapshotDataError(f"label {int(raw_labels[bad])} at row {bad} >= num_classes {num_classes}")
    labels = LabelSet(raw_labels.astype(np.int64), num_classes)
    return FeatureSnapshot(step=step, labels=labels, channels=tuple(mats))


def read_snapshot(source) -> FeatureSnapshot:
    """Read a snapshot from a path, directory (CSV fallback) or binary stream."""
    if isinstance(source, (str, Path)):
        if os.path.isdir(source):
            return read_snapshot_csv(source)
        with open(source, "rb") as fh:
            return snapshot_from_bytes(fh.read())
    if isinstance(source, (bytes, bytearray)):
        return snapshot_from_bytes(bytes(source))
    return snapshot_from_bytes(source.read())


# -- CSV fallback -------------------------------------------------------

_CHANNEL_RE = re.compile(r"channel_(\d+)\.csv$")


def write_snapshot_csv(snap: FeatureSnapshot, directory) -> None:
    """One matrix file per channel plus labels.csv and meta.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "meta.csv").write_text(f"step,{snap.step}\nnum_classes,{snap.labels.num_classes}\n")
    np.savetxt(directory / "labels.csv", snap.labels.labels, fmt="%d")
    for c, mat in enumerate(snap.channels):
        # %.9g round-trips float32 exactly
        np.savetxt(directory / f"channel_{c:03d}.csv", mat, fmt="%.9g", delimiter=",")


def read_snapshot_csv(directory) -> FeatureSnapshot:
    """Parse the CSV fallback layout into the same snapshot as its binary twin."""
    directory = Path(directory)
    meta_path = directory / "meta.csv"
    labels_path = directory / "labels.csv"
    if not meta_path.is_file():
        raise SnapshotFormatError(f"missing {meta_path}", 0)
    if not labels_path.is_file():
        raise SnapshotFormatError(f"missing {labels_path}", 0)
    meta: dict[str, int] = {}
    for line in meta_path.read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(",")
        try:
            meta[key.strip()] = int(value)
        except ValueError:
            raise SnapshotFormatError(f"bad meta line {line!r}", 0) from None
    if "step" not in meta or "num_classes" not in meta:
        raise SnapshotFormatError("meta.csv must define step and num_classes", 0)
    raw_labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
    channel_files = sorted(
        (int(m.group(1)), p)
        for p in directory.iterdir()
        if (m := _CHANNEL_RE.search(p.name))
    )
    if not channel_files:
        raise SnapshotFormatError(f"no channel_NNN.csv files in {directory}", 0)
    if [idx for idx, _ in channel_files] != list(range(len(channel_files))):
        raise SnapshotFormatError("channel files must be numbered 0..C-1 without gaps", 0)
    mats = []
    for ch, path in channel_files:
        mat = np.loadtxt(path, dtype=np.float64, delimiter=",", ndmin=2)
        if not np.all(np.isfinite(mat)):
            rows = np.unique(np.nonzero(~np.isfinite(mat))[0])
            cells = [(ch, int(r)) for r in rows]
            raise SnapshotDataError(
                f"non-finite activations in {path.name} rows {rows.tolist()}", cells
            )
        mats.append(mat.astype(np.float32))
    labels = LabelSet(raw_labels, meta["num_classes"])
    return FeatureSnapshot(step=meta["step"], labels=labels, channels=tuple(mats))
