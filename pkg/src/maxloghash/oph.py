"""MaxLogOPH: one-permutation MaxLogHash.

A single 64-bit hash per item picks a bucket from its low ``log2 k`` bits
and a log-rank from the remaining high bits, so each update touches one
register.  When estimating, an empty bucket counts as holding the lowest
possible rank and the estimator is rescaled to the ``k'`` buckets that are
non-empty on at least one side.
"""

from __future__ import annotations

import struct
from typing import Iterable

import numpy as np

from . import codec
from .analysis import ALPHA, approx_variance
from .errors import (
    ConfigurationError,
    EmptySketchError,
    IncompatibleSketchError,
    InsufficientDataError,
    ParseError,
)
from .hashing import DEFAULT_SEED, MASK64, derive_seeds, leading_zeros_array, uniform_hash, uniform_hash_array
from .sketch import (
    DEFAULT_K,
    DEFAULT_WIDTH,
    MAX_WIDTH,
    OVERFLOW_ENTRY_BITS,
    JaccardEstimate,
    _items_array,
    decisive_count,
)

_BODY = struct.Struct("<IBQQ")
_OVERFLOW_ENTRY = struct.Struct("<IB")


class OphSketch:
    """One-permutation MaxLog sketch with per-register empty flags.

    ``k`` must be a power of two.  ``touches`` counts register accesses
    made by updates; it grows by exactly one per item.
    """

    __slots__ = (
        "k",
        "width",
        "seed",
        "item_count",
        "filled",
        "overflow",
        "touches",
        "_hash_seed",
        "_bits",
        "_codes",
        "_flags",
        "_used",
    )

    def __init__(self, k: int = DEFAULT_K, width: int = DEFAULT_WIDTH, seed: int = DEFAULT_SEED):
        if k < 1 or k & (k - 1):
            raise ConfigurationError(f"k must be a power of two, got {k}")
        if k > 1 << 32:
            raise ConfigurationError(f"k must be at most 2**32, got {k}")
        if not 1 <= width <= MAX_WIDTH:
            raise ConfigurationError(f"width must be in 1..{MAX_WIDTH}, got {width}")
        if not 0 <= seed <= MASK64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.k = k
        self.width = width
        self.seed = seed
        self.item_count = 0
        self.filled = 0
        self.overflow: dict[int, int] = {}
        self.touches = 0
        self._hash_seed = int(derive_seeds(seed, 1)[0])
        self._bits = k.bit_length() - 1
        self._codes = bytearray(k)
        self._flags = bytearray(k)
        self._used = bytearray(k)

    @property
    def sentinel(self) -> int:
        return (1 << self.width) - 1

    def bucket_and_rank(self, item: int) -> tuple[int, int]:
        x = uniform_hash(self._hash_seed, item)
        rest = x >> self._bits or 1
        return x & (self.k - 1), (64 - self._bits) - (rest - 1).bit_length()

    def update(self, item: int) -> None:
        x = uniform_hash(self._hash_seed, item)
        i = x & (self.k - 1)
        r = (64 - self._bits) - ((x >> self._bits or 1) - 1).bit_length()
        self.touches += 1
        self.item_count += 1
        if self._used[i]:
            current = self._codes[i]
            if current == self.sentinel:
                current = self.overflow[i]
            if r < current:
                return
            if r == current:
                self._flags[i] = 0
                return
        else:
            self._used[i] = 1
            self.filled += 1
        self._flags[i] = 1
        self._store_rank(i, r)

    def _store_rank(self, i: int, r: int) -> None:
        if r >= self.sentinel:
            self._codes[i] = self.sentinel
            self.overflow[i] = r
        else:
            self._codes[i] = r
            if self.overflow:
                self.overflow.pop(i, None)

    def update_many(self, items: Iterable[int] | np.ndarray) -> None:
        arr = _items_array(items)
        if arr.size == 0:
            return
        x = uniform_hash_array(self._hash_seed, arr)
        bucket = (x & np.uint64(self.k - 1)).astype(np.int64)
        rest = x >> np.uint64(self._bits)
        rest[rest == 0] = 1
        rank = leading_zeros_array(rest - np.uint64(1)).astype(np.int16) - self._bits
        best = np.full(self.k, -1, dtype=np.int16)
        np.maximum.at(best, bucket, rank)
        count = np.bincount(bucket[rank == best[bucket]], minlength=self.k)

        cur = self.ranks
        used = self.used
        new_flags = np.where(
            ~used | (best > cur), count == 1, np.where(best == cur, False, self.indicators)
        )
        touched = best >= 0
        ranks = np.where(touched, np.maximum(cur, best), cur)
        flags = np.where(touched, new_flags, self.indicators)
        new_used = used | touched

        s = self.sentinel
        self._codes = bytearray(np.where(new_used, np.minimum(ranks, s), 0).astype(np.uint8).tobytes())
        self._flags = bytearray(np.where(new_used, flags, False).astype(np.uint8).tobytes())
        self._used = bytearray(new_used.astype(np.uint8).tobytes())
        self.overflow = {int(i): int(ranks[i]) for i in np.flatnonzero(new_used & (ranks >= s))}
        self.filled = int(new_used.sum())
        self.touches += int(arr.size)
        self.item_count += int(arr.size)

    @classmethod
    def from_items(cls, items, k: int = DEFAULT_K, width: int = DEFAULT_WIDTH, seed: int = DEFAULT_SEED) -> "OphSketch":
        sk = cls(k, width, seed)
        sk.update_many(items)
        return sk

    # -- views --------------------------------------------------------------

    @property
    def used(self) -> np.ndarray:
        return np.frombuffer(bytes(self._used), dtype=np.uint8).astype(bool)

    @property
    def empty(self) -> np.ndarray:
        return ~self.used

    @property
    def ranks(self) -> np.ndarray:
        out = np.frombuffer(bytes(self._codes), dtype=np.uint8).astype(np.int16)
        for i, r in self.overflow.items():
            out[i] = r
        return out

    @property
    def indicators(self) -> np.ndarray:
        return np.frombuffer(bytes(self._flags), dtype=np.uint8).astype(bool)

    def register(self, i: int) -> tuple[int, int] | None:
        if not self._used[i]:
            return None
        return self._flags[i], self.overflow.get(i, self._codes[i])

    # -- estimation ---------------------------------------------------------

    def estimate_jaccard(self, other: "OphSketch", empty_policy: str = "floor") -> JaccardEstimate:
        """Estimate similarity over the buckets that carry information.

        ``empty_policy="floor"`` treats an empty bucket as holding a rank
        below every real rank, so a bucket filled on one side only is
        decisive when that side's indicator is set; buckets empty on both
        sides are dropped.  ``"skip"`` drops every bucket that is empty on
        either side, which biases estimates upward for small sets.
        ``registers_used`` reports the number of buckets counted.
        """
        if not isinstance(other, OphSketch):
            raise IncompatibleSketchError(f"cannot compare OphSketch with {type(other).__name__}")
        if (self.k, self.width, self.seed) != (other.k, other.width, other.seed):
            raise IncompatibleSketchError("sketch parameters (k, width, seed) differ")
        if empty_policy not in ("floor", "skip"):
            raise ConfigurationError(f"empty_policy must be 'floor' or 'skip', got {empty_policy!r}")
        if self.filled == 0 or other.filled == 0:
            raise EmptySketchError("Jaccard similarity is undefined for an empty set")
        ua, ub = self.used, other.used
        ra = np.where(ua, self.ranks, -1)
        rb = np.where(ub, other.ranks, -1)
        counted = ua & ub if empty_policy == "skip" else ua | ub
        k_used = int(counted.sum())
        if k_used == 0:
            raise InsufficientDataError("no bucket is non-empty in both sketches")
        k_hat = decisive_count(ra[counted], self.indicators[counted], rb[counted], other.indicators[counted])
        raw = 1.0 - k_hat / (k_used * ALPHA)
        est = min(1.0, max(0.0, raw))
        return JaccardEstimate(est, raw, k_hat, approx_variance(est, k_used), k_used)

    # -- accounting and serialization ---------------------------------------

    def memory_bits(self) -> int:
        """Registers plus one empty flag per bucket plus overflow entries."""
        return self.k * (self.width + 2) + OVERFLOW_ENTRY_BITS * len(self.overflow)

    def to_bytes(self) -> bytes:
        codes = np.frombuffer(bytes(self._codes), dtype=np.uint8).astype(np.uint64)
        flags = np.frombuffer(bytes(self._flags), dtype=np.uint8).astype(np.uint64)
        used = np.frombuffer(bytes(self._used), dtype=np.uint8)
        parts = [
            codec.header(codec.TAG_OPH),
            _BODY.pack(self.k, self.width, self.seed, self.item_count),
            codec.pack_fields((flags << np.uint64(self.width)) | codes, self.width + 1),
            codec.pack_fields(used, 1),
            struct.pack("<I", len(self.overflow)),
        ]
        parts += [_OVERFLOW_ENTRY.pack(i, r) for i, r in sorted(self.overflow.items())]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "OphSketch":
        _, off = codec.read_header(data, codec.TAG_OPH)
        try:
            k, width, seed, count = _BODY.unpack_from(data, off)
            off += _BODY.size
            size = codec.packed_size(k, width + 1)
            words = codec.unpack_fields(data[off : off + size], k, width + 1)
            off += size
            size = codec.packed_size(k, 1)
            used = codec.unpack_fields(data[off : off + size], k, 1)
            off += size
            (n_over,) = struct.unpack_from("<I", data, off)
            off += 4
            overflow = {}
            for _ in range(n_over):
                i, r = _OVERFLOW_ENTRY.unpack_from(data, off)
                overflow[i] = r
                off += _OVERFLOW_ENTRY.size
        except struct.error as exc:
            raise ParseError(f"truncated OPH sketch: {exc}") from None
        sk = cls(k, width, seed)
        sk._codes = bytearray((words & np.uint64(sk.sentinel)).astype(np.uint8).tobytes())
        sk._flags = bytearray((words >> np.uint64(width)).astype(np.uint8).tobytes())
        sk._used = bytearray(used.astype(np.uint8).tobytes())
        sk.overflow = overflow
        sk.filled = int(used.sum())
        sk.item_count = count
        return sk

    def __eq__(self, other) -> bool:
        return isinstance(other, OphSketch) and self.to_bytes() == other.to_bytes()

    __hash__ = None

    def __repr__(self) -> str:
        return f"OphSketch(k={self.k}, width={self.width}, seed={self.seed}, filled={self.filled})"
