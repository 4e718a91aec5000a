import csv
import io
import os
import subprocess
import sys
from pathlib import Path

import pytest

from maxloghash import cli
from maxloghash.stream import SketchStore

GOLDEN = Path(__file__).parent / "golden"
DATA = Path(__file__).parent / "data"
HELP_TARGETS = [
    [],
    ["ingest"],
    ["estimate"],
    ["gen-pair"],
    ["analyze"],
    ["analyze", "alpha"],
    ["analyze", "sizing"],
    ["analyze", "model"],
    ["bench-rmse"],
    ["bench-sweep"],
    ["bench-assoc"],
    ["bench-time"],
]


def run(argv):
    out = io.StringIO()
    code = cli.run(argv, out)
    return code, out.getvalue()


def rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def events_file(tmp_path):
    path = tmp_path / "events.tsv"
    lines = [f"alice\t{i}" for i in range(1, 401)]
    lines += [f"bob\t{i}" for i in range(1, 401)]
    lines += [f"carol\t{i}" for i in range(301, 701)]
    lines += ["alice\t5"]  # duplicate
    path.write_text("\n".join(lines) + "\n")
    return path


class TestHelp:
    @pytest.mark.parametrize("target", HELP_TARGETS, ids=lambda t: "-".join(t) or "top")
    def test_golden(self, target, capsys, monkeypatch):
        monkeypatch.setenv("COLUMNS", "100")
        code = cli.run(target + ["--help"])
        assert code == 0
        name = "help_" + ("_".join(target) or "top").replace("-", "_") + ".txt"
        assert capsys.readouterr().out == (GOLDEN / name).read_text()

    def test_every_flag_listed(self, capsys, monkeypatch):
        monkeypatch.setenv("COLUMNS", "100")
        parser = cli.build_parser()
        sub = cli._leaf_parser(parser, ["bench-sweep"])
        cli.run(["bench-sweep", "--help"])
        text = capsys.readouterr().out
        for action in sub._actions:
            for flag in action.option_strings:
                assert flag in text


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        code, _ = run(["frobnicate"])
        assert code == 1
        assert "usage:" in capsys.readouterr().err

    def test_no_command(self, capsys):
        assert run([])[0] == 1

    def test_missing_flag_named(self, capsys):
        code, _ = run(["estimate", "--user1", "a"])
        assert code == 1
        assert "--user2" in capsys.readouterr().err

    def test_bad_width_is_usage(self, events_file, capsys):
        code, _ = run(["estimate", "--input", str(events_file), "--width", "9", "--user1", "alice", "--user2", "bob"])
        assert code == 1

    def test_parse_error_has_location(self, tmp_path, capsys):
        bad = tmp_path / "bad.tsv"
        bad.write_text("a\t1\nbroken\n")
        code, _ = run(["estimate", "--input", str(bad), "--user1", "a", "--user2", "a"])
        assert code == 2
        assert f"{bad}:2" in capsys.readouterr().err

    def test_skip_bad(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("a\t1\nbroken\nb\t1\n")
        code, out = run(["estimate", "--input", str(bad), "--skip-bad", "--user1", "a", "--user2", "b"])
        assert code == 0 and rows(out)[1][2] == "1"

    def test_missing_file(self, capsys):
        code, _ = run(["estimate", "--input", "/nonexistent/x.tsv", "--user1", "a", "--user2", "b"])
        assert code == 2

    def test_unknown_user(self, events_file, capsys):
        code, _ = run(["estimate", "--input", str(events_file), "--user1", "alice", "--user2", "zed"])
        assert code == 2

    def test_incompatible_snapshot_data_error(self, tmp_path, capsys):
        snap = tmp_path / "junk.bin"
        snap.write_bytes(b"garbage")
        code, _ = run(["estimate", "--snapshot", str(snap), "--user1", "a", "--user2", "b"])
        assert code == 2


class TestCommands:
    def test_identical_users(self, events_file):
        code, out = run(["estimate", "--input", str(events_file), "--user1", "alice", "--user2", "bob"])
        assert code == 0
        table = rows(out)
        assert table[0] == ["user1", "user2", "estimate", "raw", "k_hat", "variance_hint", "registers_used"]
        assert table[1][:3] == ["alice", "bob", "1"]

    @pytest.mark.parametrize("algo", ["maxlog", "oph", "minhash", "hll"])
    def test_snapshot_round_trip(self, events_file, tmp_path, algo):
        snap = tmp_path / "store.bin"
        flags = ["--algo", algo, "--k", "64"]
        code, summary = run(["ingest", "--input", str(events_file), "--snapshot", str(snap)] + flags)
        assert code == 0
        assert rows(summary)[1][:2] == ["3", "1200"]
        query = ["--user1", "alice", "--user2", "carol"]
        _, from_snap = run(["estimate", "--snapshot", str(snap)] + query)
        _, direct = run(["estimate", "--input", str(events_file)] + flags + query)
        assert from_snap == direct
        store = SketchStore.load(snap)
        assert store.algo == algo and store.k == 64

    def test_fimi_input(self, tmp_path):
        code, out = run(["estimate", "--input", str(DATA / "mushroom_excerpt.dat"), "--format", "fimi",
                         "--user1", "1", "--user2", "2"])
        assert code == 0 and len(rows(out)) == 2

    def test_sizing(self):
        code, out = run(["analyze", "sizing", "--j", "0.9", "--rmse", "0.01"])
        assert code == 0
        assert rows(out) == [["j", "rmse", "k"], ["0.9", "0.01", "1287"]]

    def test_alpha(self):
        _, out = run(["analyze", "alpha", "--n", "2", "3"])
        table = rows(out)
        assert float(table[1][1]) == pytest.approx(2 / 3)
        assert float(table[2][1]) == pytest.approx(5 / 7)

    def test_model(self):
        _, out = run(["analyze", "model", "--n", "10000", "--j", "0.9", "--k", "128"])
        assert float(rows(out)[1][-1]) == pytest.approx(0.0317, abs=5e-4)

    def test_analyze_domain_error(self):
        assert run(["analyze", "model", "--n", "1", "--j", "0.9"])[0] == 2

    def test_gen_pair(self, tmp_path, capfd):
        out_path = tmp_path / "pair.tsv"
        code, _ = run(["gen-pair", "--n", "1000", "--j", "0.5", "--output", str(out_path)])
        assert code == 0
        lines = out_path.read_text().splitlines()
        assert len(lines) == 2000
        assert "exact_jaccard=" in capfd.readouterr().err
        code, out = run(["estimate", "--input", str(out_path), "--user1", "A", "--user2", "B", "--k", "512"])
        assert abs(float(rows(out)[1][2]) - 0.5) < 0.1

    def test_bench_rmse_deterministic(self):
        argv = ["bench-rmse", "--n", "200", "--runs", "8", "--k", "32", "--j", "0.8", "0.9", "--threads", "1"]
        first, second = run(argv), run(argv)
        assert first == second
        assert len(rows(first[1])) == 3

    def test_bench_rmse_threads_identical(self):
        base = ["bench-rmse", "--n", "200", "--runs", "6", "--k", "16"]
        assert run(base + ["--threads", "1"]) == run(base + ["--threads", "2"])

    def test_bench_sweep_equal_memory(self):
        code, out = run(["bench-sweep", "--methods", "maxlog", "hll", "--n-list", "100", "--runs", "4",
                         "--equal-memory-bits", "512", "--threads", "1"])
        table = rows(out)
        assert code == 0 and [r[1] for r in table[1:]] == ["85", "102"]

    def test_bench_assoc_synthetic(self):
        code, out = run(["bench-assoc", "--k", "64", "--runs", "1", "--j0", "0.8"])
        assert code == 0 and len(rows(out)) == 3

    def test_bench_time(self, tmp_path):
        path = tmp_path / "t.csv"
        code, _ = run(["bench-time", "--methods", "oph", "--k", "16", "--n", "20", "--runs", "1", "--output", str(path)])
        assert code == 0 and len(path.read_text().splitlines()) == 2


class TestConfig:
    def test_config_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "c.conf"
        cfg.write_text("# sizing query\nj = 0.99\nrmse = 0.01\n")
        assert run(["analyze", "sizing", "--config", str(cfg)])[1].splitlines()[1] == "0.99,0.01,138"

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "c.conf"
        cfg.write_text("j = 0.99\nrmse = 0.01\n")
        out = run(["analyze", "sizing", "--config", str(cfg), "--j", "0.9"])[1]
        assert out.splitlines()[1].endswith(",1287")

    def test_list_values(self, tmp_path):
        cfg = tmp_path / "c.conf"
        cfg.write_text("j = 0.8, 0.9\nruns = 3\nn = 100\nk = 16\nthreads = 1\n")
        code, out = run(["bench-rmse", "--config", str(cfg)])
        assert code == 0 and len(rows(out)) == 3

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.conf"
        cfg.write_text("colour = blue\n")
        assert run(["analyze", "sizing", "--config", str(cfg)])[0] == 1
        assert "colour" in capsys.readouterr().err

    def test_bad_value(self, tmp_path):
        cfg = tmp_path / "c.conf"
        cfg.write_text("runs = many\n")
        assert run(["bench-rmse", "--config", str(cfg)])[0] == 1

    def test_malformed_line(self, tmp_path):
        cfg = tmp_path / "c.conf"
        cfg.write_text("just words\n")
        assert run(["analyze", "sizing", "--config", str(cfg)])[0] == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "maxloghash", "analyze", "sizing", "--j", "0.9", "--rmse", "0.01"],
        capture_output=True,
        text=True,
        env={**os.environ, "COLUMNS": "100"},
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[-1] == "0.9,0.01,1287"
