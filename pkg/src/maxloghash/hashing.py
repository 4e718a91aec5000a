"""Seeded 64-bit hashing and geometric log-ranks.

Every sketch in the package draws its randomness from one keyed mixer
(a doubled splitmix64 finalizer).  A hash value is read as the fraction
``numerator / 2**64`` in (0, 1); its log-rank ``floor(-log2 h)`` is the
number of leading zero bits of the numerator.

Scalar helpers work on Python ints, the ``*_array`` variants on numpy
``uint64`` arrays.  Both produce bit-identical results.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
DEFAULT_SEED = 42

_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_ROT = 29


def _fmix(x: int) -> int:
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * _MUL1) & MASK64
    x = ((x ^ (x >> 27)) * _MUL2) & MASK64
    return x ^ (x >> 31)


def _rotl(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & MASK64


def uniform_hash(seed: int, item: int) -> int:
    """Return the numerator of a uniform fraction in (0, 1) for ``item``.

    The result lies in ``[1, 2**64)``; a raw zero word is remapped to 1 so
    that ``-log2`` of the fraction stays finite.
    """
    seed &= MASK64
    x = _fmix((item & MASK64) ^ seed)
    x = _fmix(x ^ _rotl(seed, _ROT))
    return x or 1


def rank_of(numerator: int) -> int:
    """``floor(-log2(numerator / 2**64))`` for a numerator in ``[1, 2**64)``.

    That equals ``64 - ceil(log2 numerator)``, i.e. the leading-zero count
    of ``numerator - 1``; the ``- 1`` keeps exact powers of two exact.
    """
    return 64 - (numerator - 1).bit_length()


def log_rank(seed: int, item: int) -> int:
    return rank_of(uniform_hash(seed, item))


# --- numpy paths -----------------------------------------------------------

_U = np.uint64


def _fmix_array(x: np.ndarray) -> np.ndarray:
    x = x + _U(_GOLDEN)
    x = (x ^ (x >> _U(30))) * _U(_MUL1)
    x = (x ^ (x >> _U(27))) * _U(_MUL2)
    return x ^ (x >> _U(31))


def uniform_hash_array(seeds: np.ndarray | int, items: np.ndarray) -> np.ndarray:
    """Vectorised :func:`uniform_hash`; ``seeds`` and ``items`` broadcast."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    items = np.asarray(items, dtype=np.uint64)
    rot = (seeds << _U(_ROT)) | (seeds >> _U(64 - _ROT))
    x = _fmix_array(items ^ seeds)
    x = _fmix_array(x ^ rot)
    x[x == 0] = 1
    return x


def leading_zeros_array(x: np.ndarray) -> np.ndarray:
    """Leading-zero count of each uint64 (64 for zero), as uint8."""
    x = x | (x >> _U(1))
    x |= x >> _U(2)
    x |= x >> _U(4)
    x |= x >> _U(8)
    x |= x >> _U(16)
    x |= x >> _U(32)
    return (64 - np.bitwise_count(x)).astype(np.uint8)


def log_rank_array(seeds: np.ndarray | int, items: np.ndarray) -> np.ndarray:
    return leading_zeros_array(uniform_hash_array(seeds, items) - _U(1))


# --- seeds and item ids ----------------------------------------------------


def derive_seeds(master: int, count: int) -> np.ndarray:
    """Derive ``count`` independent 64-bit seeds from one master seed."""
    if master < 0 or master > MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {master}")
    return np.random.SeedSequence(master).generate_state(count, dtype=np.uint64)


def derive_seed(master: int, *path: int) -> int:
    """A single child seed addressed by ``path`` (e.g. a run index)."""
    seq = np.random.SeedSequence(master, spawn_key=tuple(path))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def item_id(token: str | int) -> int:
    """Map an item token to a 64-bit id.

    Decimal integers in the unsigned 64-bit range are used as-is; any other
    string is reduced with an 8-byte BLAKE2b digest.
    """
    if isinstance(token, int):
        return token & MASK64
    if token.isdigit():
        value = int(token)
        if value <= MASK64:
            return value
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


class HashFamily:
    """``k`` independent log-rank functions derived from one master seed.

    Immutable after construction; safe to share between threads.
    """

    __slots__ = ("master_seed", "k", "seeds", "_column")

    def __init__(self, master_seed: int, k: int):
        self.master_seed = master_seed
        self.k = k
        self.seeds = derive_seeds(master_seed, k)
        self.seeds.flags.writeable = False
        self._column = self.seeds[:, None]

    def ranks(self, item: int) -> np.ndarray:
        """Log-ranks of one item under all ``k`` functions."""
        return log_rank_array(self.seeds, np.uint64(item & MASK64))

    def rank_matrix(self, items: np.ndarray) -> np.ndarray:
        """``(k, len(items))`` matrix of log-ranks."""
        return log_rank_array(self._column, np.asarray(items, dtype=np.uint64)[None, :])

    def hash_matrix(self, items: np.ndarray) -> np.ndarray:
        """``(k, len(items))`` matrix of hash numerators."""
        return uniform_hash_array(self._column, np.asarray(items, dtype=np.uint64)[None, :])
