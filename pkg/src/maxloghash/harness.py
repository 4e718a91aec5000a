"""Monte-Carlo experiments: accuracy curves, cardinality sweeps,
association-rule retrieval and per-operation timing.

Every statistic is computed from independent runs whose seeds are derived
from one master seed and the run index, so results do not depend on how
runs are scheduled across worker processes.
"""

from __future__ import annotations

import csv
import gc
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import analysis
from .baselines import HllSketch, MinHashSketch
from .errors import ConfigurationError
from .hashing import DEFAULT_SEED, derive_seed
from .oph import OphSketch
from .sketch import DEFAULT_WIDTH, MaxLogSketch
from .stream import ALGORITHMS, FimiDataset, SetPairSpec, generate_pair, make_sketch

CSV_COLUMNS = (
    "method",
    "k",
    "mode",
    "n",
    "j_true",
    "runs",
    "bias",
    "rmse",
    "mean_estimate",
    "memory_bits",
    "update_ns",
    "estimate_ns",
)


@dataclass(frozen=True)
class ExperimentRecord:
    method: str
    k: int
    mode: str
    n: int
    j_true: float
    runs: int
    bias: float
    rmse: float
    mean_estimate: float
    memory_bits: int
    update_ns: float | None = None
    estimate_ns: float | None = None

    @property
    def std(self) -> float:
        """Spread of the estimates around their mean."""
        return math.sqrt(max(0.0, self.rmse**2 - self.bias**2))


def build_sketch(method: str, items, k: int, width: int = DEFAULT_WIDTH, seed: int = DEFAULT_SEED):
    if method == "maxlog":
        return MaxLogSketch.from_items(items, k, width, seed)
    if method == "oph":
        return OphSketch.from_items(items, k, width, seed)
    if method == "minhash":
        return MinHashSketch.from_items(items, k, seed)
    if method == "hll":
        return HllSketch.from_items(items, k, seed)
    raise ConfigurationError(f"unknown method {method!r}; expected one of {', '.join(ALGORITHMS)}")


def memory_of(sketch) -> int:
    """Bits charged to a sketch; MinHash uses the 32-bit-universe convention."""
    if isinstance(sketch, MinHashSketch):
        return sketch.memory_bits(register_bits=32)
    return sketch.memory_bits()


def _run_seeds(master: int, run: int) -> tuple[int, int]:
    return derive_seed(master, run, 0), derive_seed(master, run, 1)


def _estimate_runs(method, k, width, pair_spec: SetPairSpec, run_ids) -> list[tuple[int, float, float, int]]:
    out = []
    for r in run_ids:
        pair_seed, sketch_seed = _run_seeds(pair_spec.seed, r)
        pair = generate_pair(SetPairSpec(pair_spec.mode, pair_spec.n, pair_spec.j, pair_seed))
        a = build_sketch(method, pair.a, k, width, sketch_seed)
        b = build_sketch(method, pair.b, k, width, sketch_seed)
        out.append((r, a.estimate_jaccard(b).estimate, pair.j, memory_of(a)))
    return out


def _chunks(n: int, parts: int) -> list[range]:
    size = -(-n // parts)
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


def rmse_experiment(
    method: str,
    k: int,
    pair_spec: SetPairSpec,
    runs: int = 1000,
    width: int = DEFAULT_WIDTH,
    threads: int = 1,
) -> ExperimentRecord:
    """Bias and RMSE of one method over ``runs`` fresh set pairs and seeds.

    ``pair_spec.seed`` is the master seed.  For HyperLogLog ``k`` is the number
    of 5-bit registers.
    """
    if runs < 1:
        raise ConfigurationError(f"runs must be >= 1, got {runs}")
    if threads > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            jobs = [pool.submit(_estimate_runs, method, k, width, pair_spec, ids) for ids in _chunks(runs, threads)]
            rows = [row for job in jobs for row in job.result()]
    else:
        rows = _estimate_runs(method, k, width, pair_spec, range(runs))
    rows.sort()
    est = np.array([r[1] for r in rows])
    truth = np.array([r[2] for r in rows])
    err = est - truth
    return ExperimentRecord(
        method=method,
        k=k,
        mode=pair_spec.mode,
        n=pair_spec.n,
        j_true=float(truth.mean()),
        runs=runs,
        bias=float(err.mean()),
        rmse=float(np.sqrt(np.mean(err**2))),
        mean_estimate=float(est.mean()),
        memory_bits=rows[0][3],
    )


def theory_rmse(method: str, k: int, j: float, union_size: int | None = None) -> float:
    """Predicted RMSE: exact bias/variance for MaxLogHash when the union size
    is known (the ``beta = 1`` approximation otherwise), ``sqrt(J(1-J)/k)``
    for MinHash."""
    if method == "minhash":
        return math.sqrt(analysis.minhash_variance(j, k))
    if method in ("maxlog", "oph"):
        if union_size is None or union_size < 2:
            return math.sqrt(analysis.approx_variance(j, k))
        model = analysis.AccuracyModel(union_size, j, k)
        return model.rmse
    raise ConfigurationError(f"no closed-form error model for {method!r}")


def equal_memory_size(method: str, bits: int) -> tuple[int, int]:
    """``(registers, width)`` giving a sketch of at most ``bits`` bits.

    MaxLog sketches use 6-bit registers (width 5); OPH additionally pays
    one empty flag per register and needs a power-of-two count.
    """
    if method == "maxlog":
        return bits // 6, 5
    if method == "oph":
        return 1 << ((bits // 7).bit_length() - 1), 5
    if method == "minhash":
        return bits // 32, DEFAULT_WIDTH
    if method == "hll":
        return bits // 5, DEFAULT_WIDTH
    raise ConfigurationError(f"unknown method {method!r}")


def cardinality_sweep(
    methods: Sequence[str],
    k: int,
    j: float,
    n_list: Sequence[int],
    runs: int = 1000,
    mode: str = "balanced",
    width: int = DEFAULT_WIDTH,
    seed: int = DEFAULT_SEED,
    equal_memory_bits: int | None = None,
    threads: int = 1,
) -> list[ExperimentRecord]:
    """One record per (method, n).

    With ``equal_memory_bits`` every method gets that many bits (see
    :func:`equal_memory_size`) instead of ``k`` registers.
    """
    records = []
    for method in methods:
        mk, mw = (k, width) if equal_memory_bits is None else equal_memory_size(method, equal_memory_bits)
        for n in n_list:
            pair_spec = SetPairSpec(mode, n, j, seed)
            records.append(rmse_experiment(method, mk, pair_spec, runs, mw, threads))
    return records


# -- association rules ------------------------------------------------------------


@dataclass(frozen=True)
class RetrievalResult:
    """Precision/recall of ``J > threshold`` retrieval, averaged over runs.

    ``empty_prediction`` / ``empty_truth`` flag the 0/0 conventions
    (precision or recall reported as 1).
    """

    method: str
    k: int
    threshold: float
    runs: int
    predicted_pairs: float
    true_pairs: int
    precision: float
    recall: float
    empty_prediction: bool = False
    empty_truth: bool = False


def exact_pair_similarities(sets: Sequence[np.ndarray]) -> np.ndarray:
    """Exact Jaccard matrix of the given sets (diagonal 1)."""
    universe = np.unique(np.concatenate(sets)) if sets else np.empty(0)
    incidence = np.zeros((len(sets), universe.size), dtype=np.float64)
    for i, s in enumerate(sets):
        incidence[i, np.searchsorted(universe, s)] = 1.0
    inter = incidence @ incidence.T
    sizes = incidence.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        jac = np.where(union > 0, inter / union, 1.0)
    return jac


def retrieval_scores(predicted: np.ndarray, truth: np.ndarray) -> tuple[float, float, bool, bool]:
    """Precision and recall of boolean pair masks with the 0/0 conventions."""
    tp = int(np.count_nonzero(predicted & truth))
    n_pred = int(np.count_nonzero(predicted))
    n_true = int(np.count_nonzero(truth))
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_true if n_true else 1.0
    return precision, recall, n_pred == 0, n_true == 0


def association_experiment(
    dataset: FimiDataset,
    method: str,
    k: int,
    j0: float,
    runs: int = 10,
    width: int = DEFAULT_WIDTH,
    seed: int = DEFAULT_SEED,
) -> RetrievalResult:
    """Retrieve item pairs whose record sets have similarity above ``j0``.

    The truth set is ``J > j0``; a pair is predicted when its estimate is
    at least ``j0``.
    """
    record_sets = dataset.record_sets()
    items = list(record_sets)
    sets = [record_sets[w] for w in items]
    iu = np.triu_indices(len(items), k=1)
    truth = exact_pair_similarities(sets)[iu] > j0

    precisions, recalls, predicted = [], [], []
    any_empty_pred = any_empty_truth = False
    for r in range(runs):
        sk_seed = derive_seed(seed, r)
        sketches = [build_sketch(method, s, k, width, sk_seed) for s in sets]
        est = np.array([sketches[i].estimate_jaccard(sketches[j]).estimate for i, j in zip(*iu)])
        # ">=" so that a zero threshold predicts every pair, clamped zeros included
        pred = est >= j0
        p, rc, ep, et = retrieval_scores(pred, truth)
        precisions.append(p)
        recalls.append(rc)
        predicted.append(int(pred.sum()))
        any_empty_pred |= ep
        any_empty_truth |= et
    return RetrievalResult(
        method=method,
        k=k,
        threshold=j0,
        runs=runs,
        predicted_pairs=float(np.mean(predicted)),
        true_pairs=int(truth.sum()),
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        empty_prediction=any_empty_pred,
        empty_truth=any_empty_truth,
    )


def planted_cooccurrence_dataset(
    n_items: int = 120,
    n_records: int = 2000,
    group_size: int = 4,
    seed: int = DEFAULT_SEED,
) -> FimiDataset:
    """Synthetic transactions with groups of items that tend to co-occur.

    Items are split into groups.  Each group is "active" in a record with a
    group-specific rate; an active group's members appear independently with
    a group-specific retention in (0.8, 1), which spreads the within-group
    similarities across the 0.7-0.98 range.  Items outside active groups
    appear as sparse background noise.
    """
    rng = np.random.default_rng(seed)
    n_groups = n_items // group_size
    activity = rng.uniform(0.05, 0.3, n_groups)
    retention = rng.uniform(0.8, 1.0, n_groups)
    noise = 0.01
    records = []
    for _ in range(n_records):
        rec = []
        active = rng.random(n_groups) < activity
        for g in range(n_groups):
            members = range(g * group_size + 1, (g + 1) * group_size + 1)
            keep = retention[g] if active[g] else noise
            rec.extend(w for w, u in zip(members, rng.random(group_size)) if u < keep)
        if rec:
            records.append(tuple(rec))
    return FimiDataset(records)


# -- timing ------------------------------------------------------------------------


@dataclass(frozen=True)
class TimingResult:
    method: str
    k: int
    n: int
    update_ns: float
    estimate_ns: float

    @property
    def updates_per_sec(self) -> float:
        return 1e9 / self.update_ns

    @property
    def estimates_per_sec(self) -> float:
        return 1e9 / self.estimate_ns


def timing_experiment(
    method: str,
    k: int,
    n: int = 2000,
    runs: int = 5,
    seed: int = DEFAULT_SEED,
    warmup: int = 1,
    estimate_reps: int = 200,
    width: int = DEFAULT_WIDTH,
) -> TimingResult:
    """Median wall time of one streaming update and one pairwise estimate.

    Each run streams ``n`` fresh items through :meth:`update` and times
    ``estimate_reps`` estimates with the garbage collector paused; the
    first ``warmup`` runs are discarded.
    """
    rng = np.random.default_rng(seed)
    update_samples, estimate_samples = [], []
    for r in range(warmup + runs):
        items = [int(v) for v in rng.integers(0, 1 << 32, size=n, dtype=np.uint64)]
        sk = make_sketch(method, k, width, seed)
        other = build_sketch(method, np.asarray(items[: n // 2], dtype=np.uint64), k, width, seed)
        gc_was_on = gc.isenabled()
        gc.disable()  # collector pauses scale with the caller's heap, not the sketch
        try:
            t0 = time.perf_counter_ns()
            for v in items:
                sk.update(v)
            t1 = time.perf_counter_ns()
            for _ in range(estimate_reps):
                sk.estimate_jaccard(other)
            t2 = time.perf_counter_ns()
        finally:
            if gc_was_on:
                gc.enable()
        if r >= warmup:
            update_samples.append((t1 - t0) / n)
            estimate_samples.append((t2 - t1) / estimate_reps)
    return TimingResult(method, k, n, statistics.median(update_samples), statistics.median(estimate_samples))


# -- decisive-register frequency -------------------------------------------------------


@dataclass(frozen=True)
class DecisiveTrial:
    n: int
    intersection: int
    j: float
    trials: int
    frequency: float

    @property
    def expected(self) -> float:
        return analysis.decisive_probability(self.n, self.j)

    @property
    def std_error(self) -> float:
        p = self.expected
        return math.sqrt(p * (1.0 - p) / self.trials)


def decisive_frequency(n: int, j: float, trials: int = 100_000, seed: int = DEFAULT_SEED) -> DecisiveTrial:
    """Fraction of independent hash functions giving a decisive register
    for two explicit sets with union ``n`` and ``round(j * n)`` shared items.

    Each of the ``trials`` registers of one wide sketch is its own seeded
    hash function, so the registers are independent trials.
    """
    c = round(j * n)
    rest = n - c
    only_a = (rest + 1) // 2
    universe = np.arange(1, n + 1, dtype=np.uint64)
    a = universe[: c + only_a]
    b = np.concatenate([universe[:c], universe[c + only_a :]])
    sa = MaxLogSketch.from_items(a, trials, 7, seed)
    sb = MaxLogSketch.from_items(b, trials, 7, seed)
    k_hat = sa.estimate_jaccard(sb).k_hat
    return DecisiveTrial(n, c, c / n, trials, k_hat / trials)


# -- output -------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def emit_csv(records: Iterable[ExperimentRecord], path) -> None:
    """Write records with a fixed column order; ``path`` may be a file object."""
    names = [f.name for f in fields(ExperimentRecord)]
    assert tuple(names) == CSV_COLUMNS

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow([_fmt(getattr(rec, name)) for name in CSV_COLUMNS])

    if hasattr(path, "write"):
        write(path)
    else:
        with open(Path(path), "w", newline="") as fh:
            write(fh)
