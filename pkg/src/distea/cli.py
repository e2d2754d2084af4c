"""Command line interface.

Exit codes: 0 success, 1 one or more queries failed, 2 usage or input errors.

Machine-readable output (``--format lines``) is tab separated:

* ``query``: ``<query>\\t<subset>\\t<method>`` per member, subset one of
  ``all``, ``local``, ``remote``, ``common``; with ``--baseline mcov`` also
  ``<query>\\tratio-<subset>\\t<n>/<d>``; failures print
  ``<query>\\terror\\tnot-executed``.
* ``report``: a header line then one line per query, then a ``mean`` line.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .impact import METRICS, CorpusIndex, QueryNotExecutedError, effectiveness
from .model import ImpactSet
from .sim import example_e_paths
from .sim.runner import MEM, TCP, SimulationError, run_scripts
from .sim.script import ScriptError, parse_script
from .tracefile import TRACE_SUFFIX, TraceCorpus, TraceFormatError, load_corpus, write_trace

log = logging.getLogger("distea")

EXIT_OK, EXIT_QUERY, EXIT_USAGE = 0, 1, 2
SUBSETS = ("all", "local", "remote", "common")


class UsageError(Exception):
    pass


def _load(paths) -> TraceCorpus:
    try:
        return load_corpus(paths)
    except FileNotFoundError as exc:
        raise UsageError(f"no such trace file: {exc.filename}") from exc
    except (TraceFormatError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _order_key(corpus: TraceCorpus, process_filter):
    """Sort members by the stamp of their last exit (within the processes the
    subset covers), then by name."""

    def key(method):
        stamps = [
            t.records[method].last_return
            for p, t in corpus.traces.items()
            if method in t.records and process_filter(p)
        ]
        return (max(stamps, default=-1), method)

    return key


def _members(corpus: TraceCorpus, result: ImpactSet, subset: str) -> list[str]:
    local = result.local_process
    filters = {
        "all": lambda p: True,
        "local": lambda p: p == local,
        "remote": lambda p: p != local,
        "common": lambda p: True,
    }
    return sorted(getattr(result, subset), key=_order_key(corpus, filters[subset]))


def _read_queries(args) -> list[str]:
    queries = list(args.query or [])
    if args.query_file:
        try:
            text = Path(args.query_file).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read query file: {exc}") from exc
        queries += [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not queries:
        raise UsageError("no queries given (use -q or --query-file)")
    return queries


def _write_traces(result, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, trace in sorted(result.corpus.traces.items()):
        path = out_dir / f"{name}{TRACE_SUFFIX}"
        write_trace(trace, path)
        written.append(path)
    return written


def cmd_run(args, out) -> int:
    programs = []
    for p in args.scripts:
        try:
            programs.append(parse_script(Path(p).read_text(), source=str(p)))
        except OSError as exc:
            raise UsageError(f"cannot read script {p}: {exc.strerror}") from exc
        except ScriptError as exc:
            raise UsageError(str(exc)) from exc
    bind = {}
    for item in args.bind or []:
        label, sep, addr = item.partition("=")
        if not sep:
            raise UsageError(f"--bind expects LABEL=HOST:PORT, got {item!r}")
        bind[label] = addr
    try:
        result = run_scripts(programs, args.transport, args.seed, timeout=args.timeout, bind=bind)
    except ScriptError as exc:
        raise UsageError(str(exc)) from exc
    for path in _write_traces(result, Path(args.out_dir)):
        print(path, file=out)
    return EXIT_OK


def _print_query(corpus, index, query, args, out) -> bool:
    try:
        result = index.impact_set(query)
        baseline = index.mcov_set(query) if args.baseline == "mcov" else None
    except QueryNotExecutedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.format == "lines":
            print(f"{query}\terror\tnot-executed", file=out)
        else:
            print(f"{query}: ERROR not executed", file=out)
        return False
    if args.format == "lines":
        for subset in SUBSETS:
            for m in _members(corpus, result, subset):
                print(f"{query}\t{subset}\t{m}", file=out)
        if baseline is not None:
            for subset in SUBSETS[:3]:
                n, d = len(getattr(result, subset)), len(getattr(baseline, subset))
                print(f"{query}\tratio-{subset}\t{n}/{d}", file=out)
        return True
    print(f"{query}  (local process: {result.local_process})", file=out)
    for subset in SUBSETS:
        members = _members(corpus, result, subset)
        line = f"  {subset:<7}{len(members):>4}  {', '.join(members)}"
        if baseline is not None and subset != "common":
            d = len(getattr(baseline, subset))
            ratio = len(members) / d if d else 0.0
            line += f"   [mcov {len(members)}/{d} = {ratio:.1%}]"
        print(line.rstrip(), file=out)
    return True


def cmd_query(args, out) -> int:
    corpus = _load(args.traces)
    queries = _read_queries(args)
    index = CorpusIndex(corpus)
    ok = [_print_query(corpus, index, q, args, out) for q in queries]
    return EXIT_OK if all(ok) else EXIT_QUERY


def cmd_report(args, out) -> int:
    corpus = _load(args.traces)
    index = CorpusIndex(corpus)
    queries = None if (args.all_queries or not (args.query or args.query_file)) else _read_queries(args)
    if queries:
        missing = [q for q in queries if q not in index.executed_methods()]
        for q in missing:
            print(f"error: query {q!r} was not executed", file=sys.stderr)
        queries = [q for q in queries if q not in missing]
        if not queries:
            return EXIT_QUERY
    report = effectiveness(corpus, queries, index=index)
    cols = ("size_all", "size_local", "size_remote", "mcov_all", "mcov_local", "mcov_remote")
    if args.format == "lines":
        print("\t".join(("query", "local_process") + cols + METRICS), file=out)
        for r in report.rows:
            vals = [str(getattr(r, c)) for c in cols] + [f"{getattr(r, m):.6f}" for m in METRICS]
            print("\t".join([r.query, r.local_process] + vals), file=out)
        print("\t".join(["mean", "-"] + ["-"] * len(cols) + [f"{report.means[m]:.6f}" for m in METRICS]), file=out)
    else:
        width = max(len("query"), *(len(r.query) for r in report.rows))
        head = f"{'query':<{width}}  {'|IS|':>5} {'|MCov|':>6}  {'all':>6} {'local':>6} {'remote':>6}   {'loc-only':>8} {'rem-only':>8} {'common':>7}"
        print(head, file=out)
        print("-" * len(head), file=out)
        for r in report.rows:
            print(
                f"{r.query:<{width}}  {r.size_all:>5} {r.mcov_all:>6}  "
                f"{r.ratio_all:>6.1%} {r.ratio_local:>6.1%} {r.ratio_remote:>6.1%}   "
                f"{r.local_only:>8.1%} {r.remote_only:>8.1%} {r.common:>7.1%}",
                file=out,
            )
        print("-" * len(head), file=out)
        m = report.means
        print(
            f"{'mean':<{width}}  {'':>5} {'':>6}  {m['ratio_all']:>6.1%} {m['ratio_local']:>6.1%} "
            f"{m['ratio_remote']:>6.1%}   {m['local_only']:>8.1%} {m['remote_only']:>8.1%} {m['common']:>7.1%}",
            file=out,
        )
    return EXIT_OK


def cmd_merge(args, out) -> int:
    corpus = _load(args.traces)
    for p in corpus.processes:
        t = corpus.traces[p]
        print(f"{p}\t{len(t.records)}", file=out)
    print(f"total\t{corpus.record_count()}", file=out)
    return EXIT_OK


def cmd_demo(args, out) -> int:
    paths = [str(p) for p in example_e_paths()]
    args.scripts, args.bind, args.timeout = paths, [], 10.0
    cmd_run(args, out)
    q = argparse.Namespace(baseline="mcov", format="table")
    corpus = _load([args.out_dir])
    _print_query(corpus, CorpusIndex(corpus), "S::getMax", q, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distea", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p):
        p.add_argument("--format", choices=("table", "lines"), default="table")

    def add_queries(p):
        p.add_argument("-q", "--query", action="append", metavar="METHOD")
        p.add_argument("--query-file", metavar="FILE")

    p = sub.add_parser("run", help="execute script files and write one trace per process")
    p.add_argument("scripts", nargs="+", metavar="SCRIPT")
    p.add_argument("--transport", choices=(MEM, TCP), default=MEM)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="traces")
    p.add_argument("--timeout", type=float, default=10.0, help="TCP run limit in seconds")
    p.add_argument(
        "--bind", action="append", metavar="LABEL=HOST:PORT",
        help="pin an address label to a real endpoint (tcp only)",
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("query", help="impact sets of the given methods")
    p.add_argument("traces", nargs="+", metavar="TRACE", help="trace files or directories")
    add_queries(p)
    p.add_argument("--baseline", choices=("mcov",))
    add_format(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("report", help="size ratios against MCov and impact-set composition")
    p.add_argument("traces", nargs="+", metavar="TRACE")
    p.add_argument("--all-queries", action="store_true", help="use every executed method (default)")
    add_queries(p)
    add_format(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("merge", help="check that traces merge and list record counts")
    p.add_argument("traces", nargs="+", metavar="TRACE")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("demo", help="run the bundled client/server example and query S::getMax")
    p.add_argument("--transport", choices=(MEM, TCP), default=MEM)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="traces")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"distea: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        print(f"distea: run failed: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
