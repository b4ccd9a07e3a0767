"""Typed OCT volume containers and the shared binary file format.

Repeat-scan amplitude data is a 4D block ordered (B-scan, repeat, A-scan,
sample) with the sample index fastest in memory.  Angiography volumes drop
the repeat axis.  Both serialize to a little-endian binary container:

    bytes 0-3   magic ``OCTV``
    byte  4     format version (currently 1)
    byte  5     rank (3 or 4)
    bytes 6-11  reserved, zero
    then        rank * u32 extents, then float32 payload

The payload is binary32 regardless of in-memory precision, so a round trip
through disk is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

MAGIC = b"OCTV"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sBB6s")

# Retained-repeat index patterns for the two standard subsampling protocols:
# 3 of 10 keeps the first, fifth and ninth acquisition, 5 of 10 keeps every
# second one.
_SUBSAMPLE_PATTERNS = {3: (0, 4, 8), 5: (0, 2, 4, 6, 8)}


class FormatError(ValueError):
    """A container file could not be decoded."""


@dataclass(frozen=True)
class Dims:
    """Extent of a repeat-scan acquisition.

    Attributes
    ----------
    n_b : int
        Number of B-scan positions.
    n_r : int
        Repeats acquired per B-scan position.
    n_a : int
        A-scans per B-scan.
    n_s : int
        Samples (depth pixels) per A-scan.
    """

    n_b: int
    n_r: int
    n_a: int
    n_s: int

    def __post_init__(self) -> None:
        for name in ("n_b", "n_r", "n_a", "n_s"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_b, self.n_r, self.n_a, self.n_s)

    @property
    def voxel_count(self) -> int:
        return self.n_b * self.n_r * self.n_a * self.n_s


def _validated_payload(data: np.ndarray, what: str) -> np.ndarray:
    out = np.ascontiguousarray(data, dtype=np.float32)
    if not np.isfinite(out).all():
        raise ValueError(f"{what} must be finite")
    if (out < 0).any():
        raise ValueError(f"{what} must be non-negative")
    return out


class RepeatScanVolume:
    """Repeated B-scan amplitudes, shape (n_b, n_r, n_a, n_s), linear scale."""

    def __init__(self, data: np.ndarray):
        data = np.asarray(data)
        if data.ndim != 4:
            raise ValueError(f"repeat-scan data must be 4D, got shape {data.shape}")
        self.data = _validated_payload(data, "amplitudes")
        self.dims = Dims(*self.data.shape)

    def __repr__(self) -> str:
        return f"RepeatScanVolume(dims={self.dims})"


class AngioVolume:
    """Per-voxel angiography values, shape (n_b, n_a, n_s)."""

    def __init__(self, data: np.ndarray):
        data = np.asarray(data)
        if data.ndim != 3:
            raise ValueError(f"angiography data must be 3D, got shape {data.shape}")
        self.data = _validated_payload(data, "angiography values")
        if min(self.data.shape) < 1:
            raise ValueError("all extents must be positive")

    @property
    def dims_3d(self) -> tuple[int, int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"AngioVolume(dims_3d={self.dims_3d})"


class EnFaceImage:
    """2D projection of an angiography volume, shape (n_b, n_a).

    Kept in float64 because images feed metrics directly and are exported
    as PNG or CSV, never through the binary container.
    """

    def __init__(self, data: np.ndarray):
        data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        if data.ndim != 2:
            raise ValueError(f"image data must be 2D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("image pixels must be finite")
        if (data < 0).any():
            raise ValueError("image pixels must be non-negative")
        self.data = data

    @property
    def width(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    def __repr__(self) -> str:
        return f"EnFaceImage(width={self.width}, height={self.height})"


Volume = Union[RepeatScanVolume, AngioVolume]


def save_volume(vol: Volume, path: str | Path) -> None:
    """Write a volume to the binary container format."""
    data = vol.data
    rank = data.ndim
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, rank, b"\x00" * 6))
        fh.write(struct.pack(f"<{rank}I", *data.shape))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_volume(path: str | Path) -> Volume:
    """Read a volume written by :func:`save_volume`.

    Raises
    ------
    FormatError
        On a bad magic number, an unsupported format version, a truncated
        payload, or non-finite payload values.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} bytes")
    magic, version, rank, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"unsupported container version {version}, expected {FORMAT_VERSION}"
        )
    if rank not in (3, 4):
        raise FormatError(f"unsupported rank {rank}, expected 3 or 4")
    dims_size = 4 * rank
    if len(raw) < _HEADER.size + dims_size:
        raise FormatError("truncated extents")
    shape = struct.unpack_from(f"<{rank}I", raw, _HEADER.size)
    if any(n < 1 for n in shape):
        raise FormatError(f"non-positive extent in {shape}")
    count = int(np.prod(shape, dtype=np.int64))
    offset = _HEADER.size + dims_size
    expected = offset + 4 * count
    if len(raw) < expected:
        raise FormatError(
            f"truncated payload: expected {expected} bytes, file has {len(raw)}"
        )
    if len(raw) > expected:
        raise FormatError(f"trailing bytes after payload ({len(raw) - expected})")
    payload = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    if not np.isfinite(payload).all():
        raise FormatError("non-finite values in payload")
    payload = payload.reshape(shape).copy()
    if rank == 4:
        return RepeatScanVolume(payload)
    return AngioVolume(payload)


def subsample_repeats(
    vol: RepeatScanVolume, k: int | str | Sequence[int]
) -> RepeatScanVolume:
    """Retain a subset of repeats, preserving acquisition order.

    ``k=3`` and ``k=5`` select the standard patterns from a 10-repeat
    acquisition (indices 0,4,8 and 0,2,4,6,8).  ``k="all"`` returns the
    input unchanged.  An explicit strictly increasing index sequence may be
    given instead.
    """
    n_r = vol.dims.n_r
    if isinstance(k, str):
        if k != "all":
            raise ValueError(f"unknown subsampling pattern {k!r}")
        return vol
    if isinstance(k, (int, np.integer)):
        k = int(k)
        if k > n_r:
            raise ValueError(f"cannot keep {k} of {n_r} repeats")
        pattern = _SUBSAMPLE_PATTERNS.get(k)
        if pattern is None:
            raise ValueError(
                f"k={k} has no standard pattern; pass 'all' or an index sequence"
            )
        if n_r != 10:
            raise ValueError(
                f"the {k}-repeat pattern assumes 10 acquired repeats, volume has {n_r}"
            )
        indices = pattern
    else:
        indices = tuple(int(i) for i in k)
        if not indices:
            raise ValueError("index sequence must be non-empty")
        if any(i < 0 or i >= n_r for i in indices):
            raise ValueError(f"repeat index out of range for n_r={n_r}: {indices}")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError(f"repeat indices must be strictly increasing: {indices}")
    return RepeatScanVolume(vol.data[:, indices])


def normalize_amplitudes(vol: RepeatScanVolume) -> RepeatScanVolume:
    """Scale amplitudes by the 99.9th-percentile value and clamp to [0, 1].

    The percentile is taken as an order statistic (no interpolation), which
    makes the operation idempotent: the reference sample maps to exactly 1
    and a second pass divides by 1.  An all-zero volume is returned
    unchanged.
    """
    scale = float(np.quantile(vol.data, 0.999, method="lower"))
    if scale == 0.0:
        return vol
    return RepeatScanVolume(np.clip(vol.data / np.float32(scale), 0.0, 1.0))
