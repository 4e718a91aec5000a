"""The MaxLogHash sketch.

Each of the ``k`` registers keeps, for its own hash function, the largest
log-rank seen so far (``max_rank``) plus one indicator bit that is set iff
exactly one item attains that rank.  Ranks are stored in ``width`` bits;
the all-ones code is reserved as a sentinel meaning "the true rank lives
in the overflow table", so codes ``0 .. 2**width - 2`` are stored inline.

A sketch is single-writer.  Once updates stop it can be read from any
number of threads; :meth:`MaxLogSketch.estimate_jaccard` does not mutate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels, codec
from .analysis import ALPHA, approx_variance
from .errors import ConfigurationError, EmptySketchError, IncompatibleSketchError, ParseError
from .hashing import DEFAULT_SEED, MASK64, HashFamily

DEFAULT_K = 128
DEFAULT_WIDTH = 6
MAX_WIDTH = 7

#: Bits charged per overflow-table entry (index + rank + table overhead).
OVERFLOW_ENTRY_BITS = 96

_BODY = struct.Struct("<IBQQ")
_OVERFLOW_ENTRY = struct.Struct("<IB")


@dataclass(frozen=True)
class JaccardEstimate:
    """Result of a pairwise similarity query.

    ``raw`` is the unclamped estimator value; ``estimate`` is ``raw``
    clipped to [0, 1].  ``k_hat`` is the estimator's sufficient statistic
    (decisive registers for MaxLog sketches, matching registers for
    MinHash, ``None`` for HyperLogLog).  ``registers_used`` is the number
    of register pairs that entered the estimate.
    """

    estimate: float
    raw: float
    k_hat: int | None
    variance_hint: float | None
    registers_used: int

    @classmethod
    def from_raw(cls, raw: float, k_hat=None, variance_hint=None, registers_used=0) -> "JaccardEstimate":
        return cls(min(1.0, max(0.0, raw)), raw, k_hat, variance_hint, registers_used)


def _items_array(items: Iterable[int] | np.ndarray) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return items.astype(np.uint64, copy=False)
    return np.fromiter((int(v) & MASK64 for v in items), dtype=np.uint64)


def decisive_count(ranks_a, flags_a, ranks_b, flags_b) -> int:
    """Registers where max ranks differ and the larger one is unique."""
    return int(np.count_nonzero((ranks_a > ranks_b) & flags_a) + np.count_nonzero((ranks_b > ranks_a) & flags_b))


class MaxLogSketch:
    """MaxLogHash sketch of one streaming set.

    Args:
        k: number of registers (independent hash functions), ``k >= 1``.
        width: rank width in bits, 1..7.  Each register costs ``width + 1``
            bits including the indicator.
        seed: master seed; the ``k`` hash functions derive from it.

    Items must be distinct; feeding the same item twice clears indicator
    bits that should stay set.  Duplicate filtering belongs upstream
    (see :mod:`maxloghash.stream`).
    """

    __slots__ = ("k", "width", "seed", "item_count", "overflow", "_family", "_codes", "_flags")

    def __init__(self, k: int = DEFAULT_K, width: int = DEFAULT_WIDTH, seed: int = DEFAULT_SEED):
        if k < 1:
            raise ConfigurationError(f"k must be >= 1, got {k}")
        if not 1 <= width <= MAX_WIDTH:
            raise ConfigurationError(f"width must be in 1..{MAX_WIDTH}, got {width}")
        if not 0 <= seed <= MASK64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.k = k
        self.width = width
        self.seed = seed
        self.item_count = 0
        self.overflow: dict[int, int] = {}
        self._family = HashFamily(seed, k)
        self._codes = np.zeros(k, dtype=np.uint8)
        self._flags = np.zeros(k, dtype=np.uint8)

    # -- state views ------------------------------------------------------

    @property
    def sentinel(self) -> int:
        return (1 << self.width) - 1

    @property
    def is_empty(self) -> bool:
        return self.item_count == 0

    @property
    def empty(self) -> np.ndarray:
        """Per-register "never updated" flags.

        Every item reaches every register, so these are all equal.
        """
        return np.full(self.k, self.is_empty)

    @property
    def codes(self) -> np.ndarray:
        """In-array rank codes (sentinel where the rank overflowed)."""
        return self._codes.copy()

    @property
    def ranks(self) -> np.ndarray:
        """Full max ranks, with overflow entries substituted."""
        out = self._codes.astype(np.int16)
        for i, r in self.overflow.items():
            out[i] = r
        return out

    @property
    def indicators(self) -> np.ndarray:
        return self._flags.astype(bool)

    def register(self, i: int) -> tuple[int, int]:
        """``(indicator, max_rank)`` of register ``i``."""
        rank = self.overflow.get(i, int(self._codes[i]))
        return int(self._flags[i]), rank

    # -- updates ----------------------------------------------------------

    def update(self, item: int) -> None:
        """Add one (previously unseen) item."""
        first = self.item_count == 0
        idx, rk = _kernels.stream_update(
            self._family.seeds, np.uint64(item & MASK64), self._codes, self._flags, first, self.sentinel
        )
        for i, r in zip(idx.tolist(), rk.tolist()):
            self._set_rank_slow(i, r, first)
        self.item_count += 1

    def _set_rank_slow(self, i: int, r: int, first: bool) -> None:
        current = None if first else self.overflow.get(i, int(self._codes[i]))
        if current is None or r > current:
            self._flags[i] = 1
            self._store_rank(i, r)
        elif r == current:
            self._flags[i] = 0

    def _store_rank(self, i: int, r: int) -> None:
        if r >= self.sentinel:
            self._codes[i] = self.sentinel
            self.overflow[i] = r
        else:
            self._codes[i] = r
            self.overflow.pop(i, None)

    def update_many(self, items: Iterable[int] | np.ndarray) -> None:
        """Add a batch of distinct items not seen before.

        Equivalent to calling :meth:`update` per item, in any order.
        """
        arr = _items_array(items)
        if arr.size == 0:
            return
        best, count = _kernels.max_rank_stats(self._family.seeds, arr)
        if self.item_count == 0:
            ranks = best.astype(np.int16)
            flags = count == 1
        else:
            cur = self.ranks
            flags = np.where(best > cur, count == 1, np.where(best == cur, False, self.indicators))
            ranks = np.maximum(cur, best)
        self._load(ranks, flags)
        self.item_count += int(arr.size)

    def _load(self, ranks: np.ndarray, flags: np.ndarray) -> None:
        s = self.sentinel
        self._codes = np.minimum(ranks, s).astype(np.uint8)
        self._flags = np.asarray(flags, dtype=np.uint8)
        over = np.flatnonzero(ranks >= s)
        self.overflow = {int(i): int(ranks[i]) for i in over}

    @classmethod
    def from_items(
        cls,
        items: Iterable[int] | np.ndarray,
        k: int = DEFAULT_K,
        width: int = DEFAULT_WIDTH,
        seed: int = DEFAULT_SEED,
    ) -> "MaxLogSketch":
        """Build a sketch from a set of distinct items in one pass."""
        sk = cls(k, width, seed)
        sk.update_many(items)
        return sk

    @classmethod
    def from_registers(
        cls,
        ranks,
        indicators,
        width: int = DEFAULT_WIDTH,
        seed: int = DEFAULT_SEED,
        item_count: int = 1,
    ) -> "MaxLogSketch":
        """Sketch with the given register contents (for fixtures and replay)."""
        ranks = np.asarray(ranks, dtype=np.int16)
        indicators = np.asarray(indicators, dtype=bool)
        if ranks.ndim != 1 or ranks.shape != indicators.shape:
            raise ConfigurationError("ranks and indicators must be 1-d and of equal length")
        if ranks.size and (ranks.min() < 0 or ranks.max() > 64):
            raise ConfigurationError("ranks must be in 0..64")
        sk = cls(ranks.size, width, seed)
        sk._load(ranks, indicators)
        sk.item_count = item_count
        return sk

    # -- estimation -------------------------------------------------------

    def _check_compatible(self, other: "MaxLogSketch") -> None:
        if not isinstance(other, MaxLogSketch):
            raise IncompatibleSketchError(f"cannot compare MaxLogSketch with {type(other).__name__}")
        if (self.k, self.width, self.seed) != (other.k, other.width, other.seed):
            raise IncompatibleSketchError(
                f"sketch parameters differ: (k, width, seed) = {(self.k, self.width, self.seed)}"
                f" vs {(other.k, other.width, other.seed)}"
            )
        if self.is_empty or other.is_empty:
            raise EmptySketchError("Jaccard similarity is undefined for an empty set")

    def estimate_jaccard(self, other: "MaxLogSketch") -> JaccardEstimate:
        self._check_compatible(other)
        if self.overflow or other.overflow:
            k_hat = decisive_count(self.ranks, self.indicators, other.ranks, other.indicators)
        else:
            k_hat = int(_kernels.decisive_codes(self._codes, self._flags, other._codes, other._flags))
        raw = 1.0 - k_hat / (self.k * ALPHA)
        est = min(1.0, max(0.0, raw))
        return JaccardEstimate(est, raw, k_hat, approx_variance(est, self.k), self.k)

    # -- accounting and serialization -------------------------------------

    def memory_bits(self) -> int:
        return self.k * (self.width + 1) + OVERFLOW_ENTRY_BITS * len(self.overflow)

    def to_bytes(self) -> bytes:
        words = (self._flags.astype(np.uint64) << np.uint64(self.width)) | self._codes.astype(np.uint64)
        parts = [
            codec.header(codec.TAG_MAXLOG),
            _BODY.pack(self.k, self.width, self.seed, self.item_count),
            codec.pack_fields(words, self.width + 1),
            struct.pack("<I", len(self.overflow)),
        ]
        parts += [_OVERFLOW_ENTRY.pack(i, r) for i, r in sorted(self.overflow.items())]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MaxLogSketch":
        _, off = codec.read_header(data, codec.TAG_MAXLOG)
        try:
            k, width, seed, count = _BODY.unpack_from(data, off)
            off += _BODY.size
            size = codec.packed_size(k, width + 1)
            words = codec.unpack_fields(data[off : off + size], k, width + 1)
            off += size
            (n_over,) = struct.unpack_from("<I", data, off)
            off += 4
            overflow = {}
            for _ in range(n_over):
                i, r = _OVERFLOW_ENTRY.unpack_from(data, off)
                overflow[i] = r
                off += _OVERFLOW_ENTRY.size
        except struct.error as exc:
            raise ParseError(f"truncated MaxLog sketch: {exc}") from None
        sk = cls(k, width, seed)
        sk._codes = (words & np.uint64(sk.sentinel)).astype(np.uint8)
        sk._flags = (words >> np.uint64(width)).astype(np.uint8)
        sk.overflow = overflow
        sk.item_count = count
        return sk

    def __eq__(self, other) -> bool:
        return isinstance(other, MaxLogSketch) and self.to_bytes() == other.to_bytes()

    __hash__ = None

    def __repr__(self) -> str:
        return f"MaxLogSketch(k={self.k}, width={self.width}, seed={self.seed}, items={self.item_count})"


def estimate_jaccard(a: MaxLogSketch, b: MaxLogSketch) -> JaccardEstimate:
    return a.estimate_jaccard(b)
