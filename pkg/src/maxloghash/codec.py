"""Binary envelope shared by every sketch type.

Layout (little-endian)::

    magic  b"MLGS"
    u8     format version
    u8     type tag
    ...    type-specific body

Register arrays inside a body are bit-packed LSB-first with
:func:`pack_fields`.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError

MAGIC = b"MLGS"
VERSION = 1

TAG_MAXLOG = 1
TAG_OPH = 2
TAG_MINHASH = 3
TAG_HLL = 4

_HEAD = struct.Struct("<4sBB")


def header(tag: int) -> bytes:
    return _HEAD.pack(MAGIC, VERSION, tag)


def read_header(data: bytes, expected_tag: int | None = None) -> tuple[int, int]:
    """Validate the envelope; return ``(tag, body_offset)``."""
    if len(data) < _HEAD.size:
        raise ParseError("truncated sketch header")
    magic, version, tag = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise ParseError("not a sketch (bad magic)")
    if version != VERSION:
        raise ParseError(f"unsupported sketch format version {version}")
    if expected_tag is not None and tag != expected_tag:
        raise ParseError(f"sketch type tag {tag} where {expected_tag} was expected")
    return tag, _HEAD.size


def pack_fields(values: np.ndarray, bits: int) -> bytes:
    """Pack non-negative integers of at most ``bits`` bits each."""
    values = np.asarray(values, dtype=np.uint64)
    shifts = np.arange(bits, dtype=np.uint64)
    planes = ((values[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(planes.ravel(), bitorder="little").tobytes()


def unpack_fields(data: bytes, count: int, bits: int) -> np.ndarray:
    flat = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    flat = flat[: count * bits].reshape(count, bits).astype(np.uint64)
    weights = np.uint64(1) << np.arange(bits, dtype=np.uint64)
    return (flat * weights).sum(axis=1).astype(np.uint64)


def packed_size(count: int, bits: int) -> int:
    return (count * bits + 7) // 8


def loads(data: bytes):
    """Deserialize any sketch type from its envelope."""
    tag, _ = read_header(data)
    if tag == TAG_MAXLOG:
        from .sketch import MaxLogSketch

        return MaxLogSketch.from_bytes(data)
    if tag == TAG_OPH:
        from .oph import OphSketch

        return OphSketch.from_bytes(data)
    if tag == TAG_MINHASH:
        from .baselines import MinHashSketch

        return MinHashSketch.from_bytes(data)
    if tag == TAG_HLL:
        from .baselines import HllSketch

        return HllSketch.from_bytes(data)
    raise ParseError(f"unknown sketch type tag {tag}")
