"""Compiled inner loops for the O(k)-per-item sketches.

All arithmetic stays in uint64; mixing a uint64 with a Python int literal
would promote to float64 under numba, hence the explicit constants.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S1 = np.uint64(1)
_S27 = np.uint64(27)
_S29 = np.uint64(29)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_S35 = np.uint64(35)
_ZERO = np.uint64(0)


@njit(inline="always")
def _fmix(x):
    x = x + _GOLDEN
    x = (x ^ (x >> _S30)) * _MUL1
    x = (x ^ (x >> _S27)) * _MUL2
    return x ^ (x >> _S31)


@njit(inline="always")
def _hash(seed, item):
    rot = (seed << _S29) | (seed >> _S35)
    x = _fmix(_fmix(item ^ seed) ^ rot)
    if x == _ZERO:
        x = _S1
    return x


@njit(inline="always")
def _clz(x):
    if x == _ZERO:
        return 64
    n = 0
    if x >> np.uint64(32) == _ZERO:
        n += 32
        x <<= np.uint64(32)
    if x >> np.uint64(48) == _ZERO:
        n += 16
        x <<= np.uint64(16)
    if x >> np.uint64(56) == _ZERO:
        n += 8
        x <<= np.uint64(8)
    if x >> np.uint64(60) == _ZERO:
        n += 4
        x <<= np.uint64(4)
    if x >> np.uint64(62) == _ZERO:
        n += 2
        x <<= np.uint64(2)
    if x >> np.uint64(63) == _ZERO:
        n += 1
    return n


@njit(inline="always")
def _rank(x):
    # floor(-log2(x / 2**64)) for x >= 1
    return _clz(x - _S1)


@njit(cache=True)
def max_rank_stats(seeds, items):
    """Per hash function: the maximum log-rank over ``items`` and how many
    items attain it.  Ranks are -1 / counts 0 when ``items`` is empty."""
    k = seeds.shape[0]
    best = np.full(k, -1, dtype=np.int16)
    count = np.zeros(k, dtype=np.int64)
    for i in range(k):
        s = seeds[i]
        b = -1
        c = 0
        # with y = x - 1:  rank > b  <=>  y < lo;   rank == b  <=>  lo <= y < hi
        lo = _ZERO
        hi = _ZERO
        for j in range(items.shape[0]):
            y = _hash(s, items[j]) - _S1
            if y < lo or b < 0:
                b = _clz(y)
                c = 1
                if b == 64:
                    lo = _ZERO
                    hi = _S1
                else:
                    lo = _S1 << np.uint64(63 - b)
                    hi = lo << _S1 if b > 0 else _ZERO
            elif y < hi or b == 0:
                c += 1
        best[i] = b
        count[i] = c
    return best, count


@njit(cache=True)
def ranks_for_item(seeds, item):
    k = seeds.shape[0]
    out = np.empty(k, dtype=np.uint8)
    for i in range(k):
        out[i] = _rank(_hash(seeds[i], item))
    return out


@njit(cache=True)
def stream_update(seeds, item, codes, flags, first, sentinel):
    """Apply one item to packed-width registers in place.

    Registers whose current code is the overflow sentinel, or whose new
    rank does not fit below it, are not touched; their indices and ranks
    are returned for the caller to resolve against the overflow table.
    """
    k = seeds.shape[0]
    idx = np.empty(k, dtype=np.int64)
    rk = np.empty(k, dtype=np.int64)
    n = 0
    for i in range(k):
        r = _rank(_hash(seeds[i], item))
        c = codes[i]
        if c == sentinel or r >= sentinel:
            idx[n] = i
            rk[n] = r
            n += 1
        elif first or r > c:
            codes[i] = r
            flags[i] = 1
        elif r == c:
            flags[i] = 0
    return idx[:n], rk[:n]


@njit(cache=True)
def min_hashes(seeds, items, out):
    """Fold ``items`` into running per-function minima ``out`` in place."""
    for i in range(seeds.shape[0]):
        s = seeds[i]
        m = out[i]
        for j in range(items.shape[0]):
            h = _hash(s, items[j])
            if h < m:
                m = h
        out[i] = m
    return out


@njit(cache=True)
def decisive_codes(codes_a, flags_a, codes_b, flags_b):
    """Decisive-register count over inline codes (no overflow entries)."""
    n = 0
    for i in range(codes_a.shape[0]):
        a = codes_a[i]
        b = codes_b[i]
        n += (a > b) * flags_a[i] + (b > a) * flags_b[i]
    return n
