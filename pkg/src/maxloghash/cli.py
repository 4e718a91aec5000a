"""Command-line interface.

Primary output is CSV on stdout; diagnostics go to stderr.  Exit codes:
0 success, 1 usage error, 2 data error (unparseable input, incompatible
sketches, unknown user).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import analysis, harness
from .errors import ConfigurationError, DomainError, ParseError, SketchError
from .hashing import DEFAULT_SEED, MASK64
from .sketch import DEFAULT_K, DEFAULT_WIDTH
from .stream import (
    ALGORITHMS,
    SetPairSpec,
    SketchStore,
    dedup,
    generate_pair,
    load_fimi,
    parse_stream,
)

log = logging.getLogger("maxloghash")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= MASK64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be a positive integer")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} must be in [0, 1]")
    return value


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_u64, default=DEFAULT_SEED, help="master seed (unsigned 64-bit, default 42)")
    p.add_argument("--config", metavar="FILE", help="key=value file supplying defaults for flags")


def _sketch_flags(p: argparse.ArgumentParser, algo: bool = True) -> None:
    if algo:
        p.add_argument("--algo", choices=ALGORITHMS, default="maxlog", help="sketch algorithm (default maxlog)")
    p.add_argument("--k", type=_positive, default=DEFAULT_K, help="registers per sketch (m for hll)")
    p.add_argument("--width", type=int, default=DEFAULT_WIDTH, help="rank width in bits, 1..7 (default 6)")


def _input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", metavar="PATH", help="event file, '-' for stdin")
    p.add_argument("--format", choices=("tsv", "fimi"), default="tsv", help="input format (default tsv)")
    p.add_argument("--dedup", choices=("bloom", "exact", "none"), default="bloom", help="duplicate filter")
    p.add_argument("--fp-rate", type=float, default=1e-6, help="Bloom false-positive target (default 1e-6)")
    p.add_argument("--capacity", type=_positive, default=1_000_000, help="expected distinct pairs for Bloom sizing")
    p.add_argument("--skip-bad", action="store_true", help="skip malformed lines instead of failing")


def _threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=_positive, default=None, help="worker processes (default: available cores)")


def _output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", metavar="PATH", help="CSV destination (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maxloghash", description="Streaming Jaccard similarity sketches.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("ingest", help="build per-user sketches from a stream and snapshot them")
    _input_flags(p)
    _sketch_flags(p)
    p.add_argument("--snapshot", metavar="PATH", help="where to write the store snapshot")
    _common(p)

    p = sub.add_parser("estimate", help="estimate the similarity of two users")
    p.add_argument("--snapshot", metavar="PATH", help="store snapshot written by ingest")
    _input_flags(p)
    _sketch_flags(p)
    p.add_argument("--user1", help="first user id")
    p.add_argument("--user2", help="second user id")
    _common(p)

    p = sub.add_parser("gen-pair", help="write a synthetic set pair as a user-item stream")
    p.add_argument("--mode", choices=("balanced", "unbalanced"), default="balanced", help="set-pair layout")
    p.add_argument("--n", type=_positive, default=10_000, help="cardinality parameter (default 10000)")
    p.add_argument("--j", type=_fraction, default=0.9, help="target Jaccard similarity (default 0.9)")
    _output(p)
    _common(p)

    p = sub.add_parser("analyze", help="closed-form accuracy model")
    asub = p.add_subparsers(dest="analysis", metavar="QUERY", parser_class=_Parser)
    a = asub.add_parser("alpha", help="alpha_n and beta_n for union sizes")
    a.add_argument("--n", type=int, nargs="+", help="union cardinalities (>= 2)")
    a.add_argument("--config", metavar="FILE", help="key=value file supplying defaults for flags")
    a = asub.add_parser("sizing", help="registers needed for a target RMSE")
    a.add_argument("--j", type=_fraction, help="similarity of interest")
    a.add_argument("--rmse", type=float, help="target root mean square error")
    a.add_argument("--config", metavar="FILE", help="key=value file supplying defaults for flags")
    a = asub.add_parser("model", help="bias, variance and RMSE for (n, J, k)")
    a.add_argument("--n", type=int, help="union cardinality (>= 2)")
    a.add_argument("--j", type=_fraction, help="Jaccard similarity")
    a.add_argument("--k", type=_positive, default=DEFAULT_K, help="registers (default 128)")
    a.add_argument("--config", metavar="FILE", help="key=value file supplying defaults for flags")

    p = sub.add_parser("bench-rmse", help="bias/RMSE of one method on synthetic pairs")
    p.add_argument("--method", choices=ALGORITHMS, default="maxlog", help="sketch algorithm")
    _sketch_flags(p, algo=False)
    p.add_argument("--mode", choices=("balanced", "unbalanced"), default="balanced", help="set-pair layout")
    p.add_argument("--n", type=_positive, default=10_000, help="cardinality parameter (default 10000)")
    p.add_argument("--j", type=_fraction, nargs="+", default=[0.9], help="target similarities")
    p.add_argument("--runs", type=_positive, default=1000, help="independent runs (default 1000)")
    _threads(p)
    _output(p)
    _common(p)

    p = sub.add_parser("bench-sweep", help="RMSE across cardinalities for several methods")
    p.add_argument("--methods", choices=ALGORITHMS, nargs="+", default=["maxlog", "oph"], help="methods")
    _sketch_flags(p, algo=False)
    p.add_argument("--mode", choices=("balanced", "unbalanced"), default="balanced", help="set-pair layout")
    p.add_argument("--j", type=_fraction, default=0.9, help="target similarity (default 0.9)")
    p.add_argument("--n-list", type=_positive, nargs="+", default=[100, 1000, 10_000], help="cardinalities")
    p.add_argument("--runs", type=_positive, default=1000, help="independent runs (default 1000)")
    p.add_argument("--equal-memory-bits", type=_positive, help="give every method this many bits instead of --k registers")
    _threads(p)
    _output(p)
    _common(p)

    p = sub.add_parser("bench-assoc", help="precision/recall of similar-pair retrieval on a FIMI file")
    p.add_argument("--input", metavar="PATH", help="FIMI file (default: planted synthetic transactions)")
    p.add_argument("--methods", choices=ALGORITHMS, nargs="+", default=["maxlog", "minhash"], help="methods")
    _sketch_flags(p, algo=False)
    p.add_argument("--j0", type=_fraction, nargs="+", default=[0.8], help="similarity thresholds")
    p.add_argument("--runs", type=_positive, default=10, help="independent runs (default 10)")
    _output(p)
    _common(p)

    p = sub.add_parser("bench-time", help="median update and estimate times")
    p.add_argument("--methods", choices=ALGORITHMS, nargs="+", default=list(ALGORITHMS), help="methods")
    p.add_argument("--k", type=_positive, nargs="+", default=[128], help="register counts")
    p.add_argument("--width", type=int, default=DEFAULT_WIDTH, help="rank width in bits, 1..7 (default 6)")
    p.add_argument("--n", type=_positive, default=2000, help="items streamed per run (default 2000)")
    p.add_argument("--runs", type=_positive, default=5, help="timed runs after warmup (default 5)")
    _output(p)
    _common(p)
    return parser


# -- config files ----------------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected key=value", lineno, path)
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _find_config(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _leaf_parser(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.ArgumentParser:
    """The (sub)parser that will handle ``argv``."""
    current = parser
    for tok in argv:
        subs = [a for a in current._actions if isinstance(a, argparse._SubParsersAction)]
        if subs and tok in subs[0].choices:
            current = subs[0].choices[tok]
    return current


def _apply_config(parser: argparse.ArgumentParser, config: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in config.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        conv = action.type or str
        try:
            if action.nargs in ("+", "*"):
                defaults[key] = [conv(v) for v in raw.replace(",", " ").split()]
            else:
                defaults[key] = conv(raw)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"bad value for config key {key!r}: {exc}") from None
        if action.choices is not None:
            vals = defaults[key] if isinstance(defaults[key], list) else [defaults[key]]
            bad = [v for v in vals if v not in action.choices]
            if bad:
                raise UsageError(f"config key {key!r}: invalid choice {bad[0]!r}")
    parser.set_defaults(**defaults)


# -- command implementations --------------------------------------------------------


def _require(args, *names: str) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"the --{name.replace('_', '-')} flag is required")


def _open_input(path: str):
    if path == "-":
        return sys.stdin
    return open(path, encoding="utf-8")


def _events(args):
    fh = _open_input(args.input)
    source = "<stdin>" if args.input == "-" else args.input
    try:
        if args.format == "fimi":
            events = list(load_fimi(fh, source=source).events())
        else:
            events = list(parse_stream(fh, fail_fast=not args.skip_bad, source=source))
    finally:
        if fh is not sys.stdin:
            fh.close()
    if args.dedup != "none":
        events = list(dedup(events, args.dedup, args.capacity, args.fp_rate))
    return events


def _store_from_input(args) -> SketchStore:
    _require(args, "input")
    store = SketchStore(args.algo, args.k, args.width, args.seed)
    return store.ingest(_events(args))


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def cmd_ingest(args, out) -> int:
    _require(args, "input", "snapshot")
    store = _store_from_input(args)
    store.save(args.snapshot)
    w = _writer(out)
    w.writerow(["users", "events", "algo", "k", "width", "seed"])
    w.writerow([len(store), store.events, store.algo, store.k, store.width, store.seed])
    log.info("wrote snapshot %s", args.snapshot)
    return EXIT_OK


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def cmd_estimate(args, out) -> int:
    _require(args, "user1", "user2")
    if args.snapshot is None and args.input is None:
        raise UsageError("one of --snapshot or --input is required")
    store = SketchStore.load(args.snapshot) if args.snapshot else _store_from_input(args)
    for user in (args.user1, args.user2):
        if user not in store:
            raise SketchError(f"unknown user {user!r}")
    est = store.estimate(args.user1, args.user2)
    w = _writer(out)
    w.writerow(["user1", "user2", "estimate", "raw", "k_hat", "variance_hint", "registers_used"])
    w.writerow(
        [args.user1, args.user2]
        + [_fmt(v) for v in (est.estimate, est.raw, est.k_hat, est.variance_hint, est.registers_used)]
    )
    return EXIT_OK


def cmd_gen_pair(args, out) -> int:
    pair = generate_pair(SetPairSpec(args.mode, args.n, args.j, args.seed))
    fh = open(args.output, "w") if args.output else out
    try:
        for user, items in (("A", pair.a), ("B", pair.b)):
            for v in items.tolist():
                fh.write(f"{user}\t{v}\n")
    finally:
        if args.output:
            fh.close()
    print(f"exact_jaccard={pair.j:.9g} |A|={pair.a.size} |B|={pair.b.size}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args, out) -> int:
    w = _writer(out)
    if args.analysis == "alpha":
        _require(args, "n")
        w.writerow(["n", "alpha_n", "beta_n"])
        for n in args.n:
            a = analysis.alpha_n(n)
            w.writerow([n, _fmt(a), _fmt(a / analysis.ALPHA)])
    elif args.analysis == "sizing":
        _require(args, "j", "rmse")
        w.writerow(["j", "rmse", "k"])
        w.writerow([_fmt(args.j), _fmt(args.rmse), analysis.required_k(args.j, args.rmse)])
    elif args.analysis == "model":
        _require(args, "n", "j")
        m = analysis.AccuracyModel(args.n, args.j, args.k)
        w.writerow(["n", "j", "k", "alpha_n", "beta_n", "bias", "variance", "rmse"])
        w.writerow([args.n, _fmt(args.j), args.k] + [_fmt(v) for v in (m.alpha, m.beta, m.bias, m.variance, m.rmse)])
    else:
        raise UsageError("analyze needs a query: alpha, sizing or model")
    return EXIT_OK


def _emit(records, args, out) -> None:
    if args.output:
        harness.emit_csv(records, args.output)
    else:
        harness.emit_csv(records, out)


def _thread_count(args) -> int:
    return args.threads or os.cpu_count() or 1


def cmd_bench_rmse(args, out) -> int:
    records = [
        harness.rmse_experiment(
            args.method, args.k, SetPairSpec(args.mode, args.n, j, args.seed), args.runs, args.width, _thread_count(args)
        )
        for j in args.j
    ]
    _emit(records, args, out)
    return EXIT_OK


def cmd_bench_sweep(args, out) -> int:
    records = harness.cardinality_sweep(
        args.methods,
        args.k,
        args.j,
        args.n_list,
        args.runs,
        args.mode,
        args.width,
        args.seed,
        args.equal_memory_bits,
        _thread_count(args),
    )
    _emit(records, args, out)
    return EXIT_OK


def cmd_bench_assoc(args, out) -> int:
    if args.input:
        with open(args.input, encoding="ascii") as fh:
            dataset = load_fimi(fh, source=args.input)
    else:
        dataset = harness.planted_cooccurrence_dataset(seed=args.seed)
    cols = ["method", "k", "threshold", "runs", "predicted_pairs", "true_pairs", "precision", "recall",
            "empty_prediction", "empty_truth"]
    rows = [
        harness.association_experiment(dataset, m, args.k, j0, args.runs, args.width, args.seed)
        for j0 in args.j0
        for m in args.methods
    ]
    fh = open(args.output, "w", newline="") if args.output else out
    try:
        w = _writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in cols])
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


def cmd_bench_time(args, out) -> int:
    cols = ["method", "k", "n", "update_ns", "estimate_ns", "updates_per_sec", "estimates_per_sec"]
    fh = open(args.output, "w", newline="") if args.output else out
    try:
        w = _writer(fh)
        w.writerow(cols)
        for m in args.methods:
            for k in args.k:
                r = harness.timing_experiment(m, k, args.n, args.runs, args.seed, width=args.width)
                w.writerow([_fmt(getattr(r, c)) for c in cols])
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "estimate": cmd_estimate,
    "gen-pair": cmd_gen_pair,
    "analyze": cmd_analyze,
    "bench-rmse": cmd_bench_rmse,
    "bench-sweep": cmd_bench_sweep,
    "bench-assoc": cmd_bench_assoc,
    "bench-time": cmd_bench_time,
}


def run(argv: list[str] | None = None, out=None) -> int:
    """Entry point; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    parser = build_parser()
    try:
        cfg_path = _find_config(argv)
        if cfg_path:
            _apply_config(_leaf_parser(parser, argv), read_config(cfg_path))
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("maxloghash: error: a command is required", file=sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"maxloghash: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"maxloghash: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, SketchError, DomainError, OSError, UnicodeDecodeError) as exc:
        print(f"maxloghash: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
