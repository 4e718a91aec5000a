import io
import math

import numpy as np
import pytest

from maxloghash import harness
from maxloghash.errors import ConfigurationError
from maxloghash.harness import (
    CSV_COLUMNS,
    ExperimentRecord,
    association_experiment,
    cardinality_sweep,
    emit_csv,
    equal_memory_size,
    exact_pair_similarities,
    retrieval_scores,
    rmse_experiment,
    theory_rmse,
    timing_experiment,
)
from maxloghash.stream import FimiDataset, SetPairSpec


def record(**kw):
    base = dict(method="maxlog", k=128, mode="balanced", n=100, j_true=0.9, runs=10, bias=0.001,
                rmse=0.03, mean_estimate=0.901, memory_bits=896)
    base.update(kw)
    return ExperimentRecord(**base)


class TestCsv:
    def test_header_only(self):
        buf = io.StringIO()
        emit_csv([], buf)
        assert buf.getvalue() == ",".join(CSV_COLUMNS) + "\n"

    def test_one_record(self, tmp_path):
        path = tmp_path / "r.csv"
        emit_csv([record(bias=1 / 3)], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[1] == "maxlog,128,balanced,100,0.9,10,0.333333333,0.03,0.901,896,,"

    def test_rerun_byte_identical(self, tmp_path):
        pair_spec = SetPairSpec("balanced", 200, 0.8, 7)
        for name in ("a.csv", "b.csv"):
            emit_csv([rmse_experiment("maxlog", 32, pair_spec, runs=20)], tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestRmse:
    @pytest.mark.parametrize("method", ["maxlog", "oph", "minhash", "hll"])
    def test_identical_sets_exact(self, method):
        rec = rmse_experiment(method, 64, SetPairSpec("balanced", 300, 1.0, 1), runs=10)
        assert rec.bias == 0.0 and rec.rmse == 0.0

    @pytest.mark.parametrize("method", ["maxlog", "minhash"])
    def test_decomposition(self, method):
        rec = rmse_experiment(method, 64, SetPairSpec("balanced", 500, 0.7, 3), runs=40)
        assert rec.rmse**2 >= rec.bias**2
        assert rec.std == pytest.approx(math.sqrt(rec.rmse**2 - rec.bias**2))

    def test_parallel_matches_serial(self):
        pair_spec = SetPairSpec("balanced", 300, 0.9, 11)
        assert rmse_experiment("maxlog", 32, pair_spec, 12) == rmse_experiment("maxlog", 32, pair_spec, 12, threads=3)

    @pytest.mark.parametrize("method, theory", [("maxlog", None), ("minhash", None)])
    def test_matches_theory(self, method, theory):
        # rmse^2 versus variance + bias^2, 3 Monte-Carlo standard errors of the squared error
        pair_spec = SetPairSpec("balanced", 1000, 0.9, 21)
        runs = 300
        rows = harness._estimate_runs(method, 128, 6, pair_spec, range(runs))
        sq = (np.array([r[1] for r in rows]) - np.array([r[2] for r in rows])) ** 2
        predicted = theory_rmse(method, 128, 0.9, 1053) ** 2
        assert abs(sq.mean() - predicted) <= 3 * sq.std(ddof=1) / math.sqrt(runs)

    def test_bad_runs(self):
        with pytest.raises(ConfigurationError):
            rmse_experiment("maxlog", 8, SetPairSpec("balanced", 10, 0.5), runs=0)

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            rmse_experiment("bloom", 8, SetPairSpec("balanced", 10, 0.5), runs=1)


class TestSweep:
    def test_equal_memory_sizes(self):
        assert equal_memory_size("maxlog", 512) == (85, 5)
        assert equal_memory_size("hll", 512) == (102, 6)
        assert equal_memory_size("minhash", 1024) == (32, 6)
        assert equal_memory_size("oph", 1024) == (128, 5)

    def test_equal_memory_within_budget(self):
        recs = cardinality_sweep(["maxlog", "hll", "oph"], 0, 0.9, [300], runs=5, equal_memory_bits=1024)
        assert all(r.memory_bits <= 1024 for r in recs)

    def test_one_record_per_pair(self):
        recs = cardinality_sweep(["maxlog", "minhash"], 32, 0.9, [50, 100], runs=5)
        assert [(r.method, r.n) for r in recs] == [("maxlog", 50), ("maxlog", 100), ("minhash", 50), ("minhash", 100)]

    @pytest.mark.slow
    def test_maxlog_flat_across_cardinality(self):
        recs = cardinality_sweep(["maxlog"], 128, 0.9, [100, 1000, 10_000], runs=300)
        r = np.array([x.rmse for x in recs])
        assert r.max() - r.min() <= 0.2 * r.mean()

    @pytest.mark.slow
    def test_oph_close_at_two_k(self):
        recs = cardinality_sweep(["maxlog", "oph"], 128, 0.9, [200], runs=1000)
        assert recs[1].rmse <= 1.25 * recs[0].rmse


class TestRetrieval:
    def test_exact_similarities(self):
        sets = [np.array([1, 2, 3]), np.array([2, 3, 4]), np.array([9])]
        jac = exact_pair_similarities(sets)
        assert jac[0, 1] == pytest.approx(0.5)
        assert jac[0, 2] == 0.0 and jac[1, 1] == 1.0

    def test_zero_conventions(self):
        none = np.zeros(4, dtype=bool)
        p, r, ep, et = retrieval_scores(none, none)
        assert (p, r, ep, et) == (1.0, 1.0, True, True)

    def test_threshold_zero(self):
        ds = FimiDataset([(1, 2), (1, 3), (2, 3), (4,)])
        res = association_experiment(ds, "minhash", 64, 0.0, runs=2)
        truth = exact_pair_similarities(list(ds.record_sets().values()))
        iu = np.triu_indices(4, 1)
        prevalence = np.mean(truth[iu] > 0)
        assert res.recall == 1.0
        assert res.precision == pytest.approx(prevalence)

    def test_threshold_above_max(self):
        ds = harness.planted_cooccurrence_dataset(n_items=12, n_records=100, seed=3)
        res = association_experiment(ds, "maxlog", 64, 1.0, runs=1)
        assert res.empty_truth and res.recall == 1.0

    def test_planted_dataset_shape(self):
        ds = harness.planted_cooccurrence_dataset(seed=1)
        assert ds.n_items == 120
        assert 0 < ds.n_records <= 2000


class TestTiming:
    def test_fields(self):
        r = timing_experiment("oph", 16, n=50, runs=2, estimate_reps=5)
        assert r.update_ns > 0 and r.estimate_ns > 0
        assert r.updates_per_sec == pytest.approx(1e9 / r.update_ns)


class TestDecisive:
    def test_singleton_never_decisive(self):
        trial = harness.decisive_frequency(1, 1.0, trials=1000)
        assert trial.frequency == 0.0 and trial.expected == 0.0
