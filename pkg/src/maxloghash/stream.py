"""User-item streams: parsing, duplicate filtering, per-user sketch stores,
FIMI transaction files and synthetic set pairs."""

from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Literal

import numpy as np

from . import codec
from .baselines import HllSketch, MinHashSketch
from .errors import ConfigurationError, ParseError, SketchError
from .hashing import DEFAULT_SEED, item_id
from .oph import OphSketch
from .sketch import DEFAULT_K, DEFAULT_WIDTH, JaccardEstimate, MaxLogSketch

log = logging.getLogger(__name__)

ALGORITHMS = ("maxlog", "oph", "minhash", "hll")
UNIVERSE_32 = 1 << 32


@dataclass(frozen=True)
class UserItemEvent:
    user: str
    item: int
    t: int


# -- parsing ----------------------------------------------------------------


@dataclass
class ParseReport:
    """Counts of lines rejected in skip mode."""

    bad_lines: list[int] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return len(self.bad_lines)


def parse_stream(
    lines: Iterable[str],
    fail_fast: bool = True,
    report: ParseReport | None = None,
    source: str | None = None,
) -> Iterator[UserItemEvent]:
    """Parse ``user<TAB>item`` lines into events with increasing ``t``.

    Blank lines and lines starting with ``#`` are ignored.  In skip mode
    (``fail_fast=False``) malformed lines are recorded in ``report``.
    """
    t = 0
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1].strip():
            if fail_fast:
                raise ParseError(f"expected 'user<TAB>item', got {line!r}", lineno, source)
            if report is not None:
                report.bad_lines.append(lineno)
            log.warning("skipping malformed line %d", lineno)
            continue
        t += 1
        yield UserItemEvent(parts[0], item_id(parts[1].strip()), t)


# -- duplicate filtering ------------------------------------------------------


def _pair_key(user: str, item: int) -> bytes:
    return hashlib.blake2b(user.encode("utf-8") + b"\x00" + item.to_bytes(8, "little"), digest_size=16).digest()


class BloomFilter:
    """Bit-array Bloom filter with Kirsch-Mitzenmacher double hashing."""

    def __init__(self, capacity: int, fp_rate: float = 1e-6):
        if capacity < 1:
            raise ConfigurationError(f"capacity must be >= 1, got {capacity}")
        if not 0.0 < fp_rate < 1.0:
            raise ConfigurationError(f"fp_rate must be in (0, 1), got {fp_rate}")
        self.size = max(8, math.ceil(-capacity * math.log(fp_rate) / math.log(2) ** 2))
        self.hash_count = max(1, round(self.size / capacity * math.log(2)))
        self.inserted = 0
        self._bits = bytearray((self.size + 7) // 8)

    def _positions(self, key: bytes) -> list[int]:
        h1 = int.from_bytes(key[:8], "little")
        h2 = int.from_bytes(key[8:], "little") | 1
        m = self.size
        return [(h1 + i * h2) % m for i in range(self.hash_count)]

    def add(self, key: bytes) -> bool:
        """Insert ``key``; return True if it was (probably) present already."""
        bits = self._bits
        present = True
        for p in self._positions(key):
            byte, mask = p >> 3, 1 << (p & 7)
            if not bits[byte] & mask:
                present = False
                bits[byte] |= mask
        if not present:
            self.inserted += 1
        return present

    def __contains__(self, key: bytes) -> bool:
        return all(self._bits[p >> 3] & (1 << (p & 7)) for p in self._positions(key))


class ExactFilter:
    """Hash-set duplicate filter with no false positives."""

    def __init__(self):
        self._seen: set[bytes] = set()

    @property
    def inserted(self) -> int:
        return len(self._seen)

    def add(self, key: bytes) -> bool:
        if key in self._seen:
            return True
        self._seen.add(key)
        return False


def dedup(
    events: Iterable[UserItemEvent],
    mode: Literal["bloom", "exact"] = "bloom",
    capacity: int = 1_000_000,
    fp_rate: float = 1e-6,
) -> Iterator[UserItemEvent]:
    """Drop repeated (user, item) pairs.

    Bloom mode never lets a duplicate through but may, with probability
    about ``fp_rate`` per pair, drop a pair that was new.
    """
    filt = BloomFilter(capacity, fp_rate) if mode == "bloom" else ExactFilter()
    for ev in events:
        if not filt.add(_pair_key(ev.user, ev.item)):
            yield ev


# -- sketch store ---------------------------------------------------------------


def make_sketch(algo: str, k: int = DEFAULT_K, width: int = DEFAULT_WIDTH, seed: int = DEFAULT_SEED):
    """New empty sketch of the named algorithm (``k`` is ``m`` for HLL)."""
    if algo == "maxlog":
        return MaxLogSketch(k, width, seed)
    if algo == "oph":
        return OphSketch(k, width, seed)
    if algo == "minhash":
        return MinHashSketch(k, seed)
    if algo == "hll":
        return HllSketch(k, seed)
    raise ConfigurationError(f"unknown algorithm {algo!r}; expected one of {', '.join(ALGORITHMS)}")


_STORE_MAGIC = b"MLGSTORE"
_STORE_HEAD = struct.Struct("<8sB8sIBQI")


class SketchStore:
    """Per-user sketches sharing one configuration.

    Ingestion is sequential; estimates can be taken at any point of the
    stream.  Snapshots use the sketch envelope format for each user.
    """

    def __init__(self, algo: str = "maxlog", k: int = DEFAULT_K, width: int = DEFAULT_WIDTH, seed: int = DEFAULT_SEED):
        make_sketch(algo, k, width, seed)  # validates the configuration
        self.algo = algo
        self.k = k
        self.width = width
        self.seed = seed
        self.sketches: dict[str, object] = {}
        self.events = 0

    def _new(self):
        return make_sketch(self.algo, self.k, self.width, self.seed)

    def add(self, user: str, item: int) -> None:
        sk = self.sketches.get(user)
        if sk is None:
            sk = self.sketches[user] = self._new()
        sk.update(item)
        self.events += 1

    def ingest(self, events: Iterable[UserItemEvent]) -> "SketchStore":
        for ev in events:
            self.add(ev.user, ev.item)
        return self

    def ingest_sets(self, sets: dict[str, Iterable[int]]) -> "SketchStore":
        """Bulk path: each user's full item set at once."""
        for user, items in sets.items():
            sk = self.sketches.get(user)
            if sk is None:
                sk = self.sketches[user] = self._new()
            before = sk.item_count
            sk.update_many(items)
            self.events += sk.item_count - before
        return self

    def __contains__(self, user: str) -> bool:
        return user in self.sketches

    def __len__(self) -> int:
        return len(self.sketches)

    def users(self) -> list[str]:
        return list(self.sketches)

    def estimate(self, user1: str, user2: str) -> JaccardEstimate:
        for u in (user1, user2):
            if u not in self.sketches:
                raise KeyError(u)
        return self.sketches[user1].estimate_jaccard(self.sketches[user2])

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        parts = [
            _STORE_HEAD.pack(
                _STORE_MAGIC, 1, self.algo.encode().ljust(8, b"\0"), self.k, self.width, self.seed, len(self.sketches)
            )
        ]
        for user in sorted(self.sketches):
            name = user.encode("utf-8")
            blob = self.sketches[user].to_bytes()
            parts.append(struct.pack("<H", len(name)) + name + struct.pack("<I", len(blob)) + blob)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SketchStore":
        try:
            magic, version, algo, k, width, seed, n = _STORE_HEAD.unpack_from(data)
        except struct.error:
            raise ParseError("truncated store snapshot") from None
        if magic != _STORE_MAGIC or version != 1:
            raise ParseError("not a sketch store snapshot (bad magic or version)")
        store = cls(algo.rstrip(b"\0").decode(), k, width, seed)
        off = _STORE_HEAD.size
        try:
            for _ in range(n):
                (ln,) = struct.unpack_from("<H", data, off)
                off += 2
                user = data[off : off + ln].decode("utf-8")
                off += ln
                (lb,) = struct.unpack_from("<I", data, off)
                off += 4
                store.sketches[user] = codec.loads(data[off : off + lb])
                off += lb
        except struct.error:
            raise ParseError("truncated store snapshot") from None
        store.events = sum(sk.item_count for sk in store.sketches.values())
        return store

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "SketchStore":
        return cls.from_bytes(Path(path).read_bytes())


# -- FIMI datasets ----------------------------------------------------------------


@dataclass
class FimiDataset:
    """Transactions of a FIMI file; record indices are 1-based."""

    records: list[tuple[int, ...]]

    @property
    def n_records(self) -> int:
        return len(self.records)

    @property
    def n_items(self) -> int:
        return len({w for rec in self.records for w in rec})

    @property
    def n_pairs(self) -> int:
        return sum(len(rec) for rec in self.records)

    def counts(self) -> tuple[int, int, int]:
        return self.n_records, self.n_items, self.n_pairs

    def events(self) -> Iterator[UserItemEvent]:
        """Item-record pairs: the item plays the user, the record the item."""
        t = 0
        for idx, rec in enumerate(self.records, 1):
            for w in rec:
                t += 1
                yield UserItemEvent(str(w), idx, t)

    def record_sets(self) -> dict[int, np.ndarray]:
        """Each item's set of record indices, items in ascending order."""
        acc: dict[int, list[int]] = {}
        for idx, rec in enumerate(self.records, 1):
            for w in rec:
                acc.setdefault(w, []).append(idx)
        return {w: np.asarray(acc[w], dtype=np.uint64) for w in sorted(acc)}


def load_fimi(lines: Iterable[str], source: str | None = None) -> FimiDataset:
    """Read a FIMI transaction file (space-separated integer ids per line).

    Blank lines are ignored; an item repeated inside a record counts once.
    """
    records = []
    for lineno, line in enumerate(lines, 1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            rec = tuple(dict.fromkeys(int(tok) for tok in tokens))
        except ValueError:
            bad = next(tok for tok in tokens if not tok.lstrip("-").isdigit())
            raise ParseError(f"non-integer item token {bad!r}", lineno, source) from None
        records.append(rec)
    return FimiDataset(records)


def load_fimi_file(path: str | Path) -> FimiDataset:
    with open(path, encoding="ascii") as fh:
        return load_fimi(fh, source=str(path))


def fimi_to_stream(lines: Iterable[str]) -> Iterator[UserItemEvent]:
    return load_fimi(lines).events()


# -- synthetic set pairs ------------------------------------------------------------


@dataclass(frozen=True)
class SetPairSpec:
    """``mode`` is ``balanced`` (|A| = |B| = n) or ``unbalanced`` (B subset of A, |A| = n)."""

    mode: Literal["balanced", "unbalanced"]
    n: int
    j: float
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class SetPair:
    a: np.ndarray
    b: np.ndarray
    j: float

    @property
    def union_size(self) -> int:
        return int(np.union1d(self.a, self.b).size)


def _distinct_sample(rng: np.random.Generator, count: int, exclude: np.ndarray | None = None) -> np.ndarray:
    """``count`` distinct 32-bit values in random order, avoiding ``exclude``."""
    out = np.empty(0, dtype=np.uint64)
    while out.size < count:
        need = count - out.size
        draw = rng.integers(0, UNIVERSE_32, size=need + need // 8 + 16, dtype=np.uint64)
        pool = np.concatenate([out, draw])
        _, first = np.unique(pool, return_index=True)
        pool = pool[np.sort(first)]
        if exclude is not None and exclude.size:
            pool = pool[~np.isin(pool, exclude)]
        out = pool[:count]
    return out


def intersection_size(pair_spec: SetPairSpec) -> int:
    if pair_spec.mode == "balanced":
        return round(2 * pair_spec.n * pair_spec.j / (1 + pair_spec.j))
    return round(pair_spec.j * pair_spec.n)


def generate_pair(pair_spec: SetPairSpec) -> SetPair:
    """Random set pair with (rounded) target similarity; returns the exact J."""
    if pair_spec.n < 1:
        raise ConfigurationError(f"n must be >= 1, got {pair_spec.n}")
    if not 0.0 <= pair_spec.j <= 1.0:
        raise ConfigurationError(f"j must be in [0, 1], got {pair_spec.j}")
    if pair_spec.mode not in ("balanced", "unbalanced"):
        raise ConfigurationError(f"mode must be balanced or unbalanced, got {pair_spec.mode!r}")
    c = intersection_size(pair_spec)
    fresh = pair_spec.n - c if pair_spec.mode == "balanced" else 0
    if pair_spec.n + fresh > UNIVERSE_32:
        raise SketchError(f"cannot draw {pair_spec.n + fresh} distinct 32-bit items")
    rng = np.random.default_rng(pair_spec.seed)
    a = _distinct_sample(rng, pair_spec.n)
    if pair_spec.mode == "balanced":
        b = np.concatenate([a[:c], _distinct_sample(rng, fresh, exclude=a)])
    else:
        b = a[:c].copy()
    union = np.union1d(a, b).size
    inter = np.intersect1d(a, b).size
    return SetPair(a, b, inter / union if union else 1.0)
