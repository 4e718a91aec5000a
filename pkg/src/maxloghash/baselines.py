"""Streaming baselines: MinHash and HyperLogLog-based Jaccard.

HyperLogLog follows the classical construction: 5-bit registers holding
the position of the first 1-bit (>= 1), the bias constant ``alpha_m``
(0.673 / 0.697 / 0.709 for m = 16 / 32 / 64, ``0.7213 / (1 + 1.079/m)``
otherwise), linear counting below ``2.5 m`` when some register is zero,
and the large-range correction for a 32-bit hash space.

Bucket selection uses a multiply-shift on the high 32 hash bits, so ``m``
need not be a power of two; that lets equal-memory comparisons use
``floor(bits / 5)`` registers.
"""

from __future__ import annotations

import math
import struct
from typing import Iterable

import numpy as np

from . import _kernels, codec
from .analysis import minhash_variance
from .errors import ConfigurationError, EmptySketchError, IncompatibleSketchError, ParseError
from .hashing import DEFAULT_SEED, MASK64, HashFamily, derive_seeds, leading_zeros_array, uniform_hash, uniform_hash_array
from .sketch import DEFAULT_K, JaccardEstimate, _items_array

_MH_BODY = struct.Struct("<IQQ")
_HLL_BODY = struct.Struct("<IQQ")

HLL_REGISTER_BITS = 5
_HLL_MAX_RANK = (1 << HLL_REGISTER_BITS) - 1
_TWO32 = float(1 << 32)


class MinHashSketch:
    """``k`` per-function minima of 64-bit hash values."""

    __slots__ = ("k", "seed", "item_count", "minima", "_family")

    def __init__(self, k: int = DEFAULT_K, seed: int = DEFAULT_SEED):
        if k < 1:
            raise ConfigurationError(f"k must be >= 1, got {k}")
        self.k = k
        self.seed = seed
        self.item_count = 0
        self._family = HashFamily(seed, k)
        self.minima = np.full(k, MASK64, dtype=np.uint64)

    def update(self, item: int) -> None:
        _kernels.min_hashes(self._family.seeds, np.array([item & MASK64], dtype=np.uint64), self.minima)
        self.item_count += 1

    def update_many(self, items: Iterable[int] | np.ndarray) -> None:
        arr = _items_array(items)
        _kernels.min_hashes(self._family.seeds, arr, self.minima)
        self.item_count += int(arr.size)

    @classmethod
    def from_items(cls, items, k: int = DEFAULT_K, seed: int = DEFAULT_SEED) -> "MinHashSketch":
        sk = cls(k, seed)
        sk.update_many(items)
        return sk

    def estimate_jaccard(self, other: "MinHashSketch") -> JaccardEstimate:
        if not isinstance(other, MinHashSketch):
            raise IncompatibleSketchError(f"cannot compare MinHashSketch with {type(other).__name__}")
        if (self.k, self.seed) != (other.k, other.seed):
            raise IncompatibleSketchError("sketch parameters (k, seed) differ")
        if self.item_count == 0 or other.item_count == 0:
            raise EmptySketchError("Jaccard similarity is undefined for an empty set")
        matches = int(np.count_nonzero(self.minima == other.minima))
        j = matches / self.k
        return JaccardEstimate(j, j, matches, minhash_variance(j, self.k), self.k)

    def memory_bits(self, register_bits: int = 64) -> int:
        """Register storage; pass ``register_bits=32`` for a 32-bit universe."""
        return self.k * register_bits

    def to_bytes(self) -> bytes:
        return (
            codec.header(codec.TAG_MINHASH)
            + _MH_BODY.pack(self.k, self.seed, self.item_count)
            + self.minima.astype("<u8").tobytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "MinHashSketch":
        _, off = codec.read_header(data, codec.TAG_MINHASH)
        try:
            k, seed, count = _MH_BODY.unpack_from(data, off)
        except struct.error as exc:
            raise ParseError(f"truncated MinHash sketch: {exc}") from None
        off += _MH_BODY.size
        body = data[off : off + 8 * k]
        if len(body) != 8 * k:
            raise ParseError("truncated MinHash sketch registers")
        sk = cls(k, seed)
        sk.minima = np.frombuffer(body, dtype="<u8").astype(np.uint64)
        sk.item_count = count
        return sk

    def __eq__(self, other) -> bool:
        return isinstance(other, MinHashSketch) and self.to_bytes() == other.to_bytes()

    __hash__ = None


def _hll_alpha(m: int) -> float:
    if m == 16:
        return 0.673
    if m == 32:
        return 0.697
    if m == 64:
        return 0.709
    return 0.7213 / (1.0 + 1.079 / m)


class HllSketch:
    """HyperLogLog with ``m`` 5-bit registers."""

    __slots__ = ("m", "seed", "item_count", "registers", "_hash_seed")

    def __init__(self, m: int = DEFAULT_K, seed: int = DEFAULT_SEED):
        if not 16 <= m <= 1 << 26:
            raise ConfigurationError(f"m must be in 16..2**26, got {m}")
        self.m = m
        self.seed = seed
        self.item_count = 0
        self.registers = np.zeros(m, dtype=np.uint8)
        self._hash_seed = int(derive_seeds(seed, 2)[1])

    def _place(self, x: int) -> tuple[int, int]:
        low = x & 0xFFFFFFFF
        return ((x >> 32) * self.m) >> 32, min(33 - low.bit_length(), _HLL_MAX_RANK)

    def update(self, item: int) -> None:
        i, rho = self._place(uniform_hash(self._hash_seed, item))
        if rho > self.registers[i]:
            self.registers[i] = rho
        self.item_count += 1

    def update_many(self, items: Iterable[int] | np.ndarray) -> None:
        arr = _items_array(items)
        if arr.size == 0:
            return
        x = uniform_hash_array(self._hash_seed, arr)
        bucket = (((x >> np.uint64(32)) * np.uint64(self.m)) >> np.uint64(32)).astype(np.int64)
        # first 1-bit of the low 32 bits: clz64(low) - 32 + 1
        rho = leading_zeros_array(x & np.uint64(0xFFFFFFFF)).astype(np.int64) - 31
        rho = np.minimum(rho, _HLL_MAX_RANK).astype(np.uint8)
        np.maximum.at(self.registers, bucket, rho)
        self.item_count += int(arr.size)

    @classmethod
    def from_items(cls, items, m: int = DEFAULT_K, seed: int = DEFAULT_SEED) -> "HllSketch":
        sk = cls(m, seed)
        sk.update_many(items)
        return sk

    def _check(self, other: "HllSketch") -> None:
        if not isinstance(other, HllSketch):
            raise IncompatibleSketchError(f"cannot combine HllSketch with {type(other).__name__}")
        if (self.m, self.seed) != (other.m, other.seed):
            raise IncompatibleSketchError("sketch parameters (m, seed) differ")

    def merge(self, other: "HllSketch") -> "HllSketch":
        """Sketch of the union (register-wise max); operands are unchanged."""
        self._check(other)
        out = HllSketch(self.m, self.seed)
        out.registers = np.maximum(self.registers, other.registers)
        out.item_count = self.item_count + other.item_count
        return out

    def cardinality(self) -> float:
        m = self.m
        estimate = _hll_alpha(m) * m * m / float(np.sum(np.ldexp(1.0, -self.registers.astype(np.int64))))
        if estimate <= 2.5 * m:
            zeros = int(np.count_nonzero(self.registers == 0))
            if zeros:
                return m * math.log(m / zeros)
        elif estimate > _TWO32 / 30.0:
            return -_TWO32 * math.log(1.0 - estimate / _TWO32)
        return estimate

    def estimate_jaccard(self, other: "HllSketch") -> JaccardEstimate:
        """Inclusion-exclusion: ``(|A| + |B| - |A u B|) / |A u B|``."""
        union = self.merge(other)
        cu = union.cardinality()
        if cu <= 0.0:
            raise EmptySketchError("estimated union cardinality is zero")
        raw = (self.cardinality() + other.cardinality() - cu) / cu
        return JaccardEstimate.from_raw(raw, registers_used=self.m)

    def memory_bits(self) -> int:
        return self.m * HLL_REGISTER_BITS

    def to_bytes(self) -> bytes:
        return (
            codec.header(codec.TAG_HLL)
            + _HLL_BODY.pack(self.m, self.seed, self.item_count)
            + codec.pack_fields(self.registers, HLL_REGISTER_BITS)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "HllSketch":
        _, off = codec.read_header(data, codec.TAG_HLL)
        try:
            m, seed, count = _HLL_BODY.unpack_from(data, off)
        except struct.error as exc:
            raise ParseError(f"truncated HLL sketch: {exc}") from None
        off += _HLL_BODY.size
        size = codec.packed_size(m, HLL_REGISTER_BITS)
        if len(data) - off < size:
            raise ParseError("truncated HLL sketch registers")
        sk = cls(m, seed)
        sk.registers = codec.unpack_fields(data[off : off + size], m, HLL_REGISTER_BITS).astype(np.uint8)
        sk.item_count = count
        return sk

    def __eq__(self, other) -> bool:
        return isinstance(other, HllSketch) and self.to_bytes() == other.to_bytes()

    __hash__ = None


def hll_merge(a: HllSketch, b: HllSketch) -> HllSketch:
    return a.merge(b)


def hll_jaccard(a: HllSketch, b: HllSketch) -> JaccardEstimate:
    return a.estimate_jaccard(b)
