"""Command-line driver.

A database lives in a directory holding the sealed snapshot ``db.sealed``
and the enclave state ``enclave.json`` (sealing key and generation
counter). Every command opens the snapshot, runs, and seals it again.

Exit codes: 0 on success, 1 for query and usage errors, 2 when integrity
checks fail (tampering or rollback).
"""

from __future__ import annotations

import argparse
import csv
import shutil
import sys
from pathlib import Path
from typing import Sequence

from .config import EngineConfig
from .engine import Engine, QueryResult
from .errors import IntegrityError, ObliqError
from .memory import AccessTrace
from .oblivtest.bench import bench_suite
from .oblivtest.tracediff import Equal, trace_diff
from .sealing import EnclaveState

SNAPSHOT = "db.sealed"
STATE = "enclave.json"
EXIT_OK, EXIT_QUERY, EXIT_INTEGRITY = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which here means an integrity failure
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


class Database:
    """The sealed database in a directory."""

    def __init__(self, directory: str | Path, config: EngineConfig | None = None):
        self.dir = Path(directory)
        self.snapshot = self.dir / SNAPSHOT
        self.state_path = self.dir / STATE
        self.config = config

    def open(self, create: bool = False) -> tuple[Engine, EnclaveState]:
        if not self.snapshot.exists():
            if not create:
                raise UsageError(f"no database in {self.dir}; run 'create' first")
            self.dir.mkdir(parents=True, exist_ok=True)
            return Engine(self.config or EngineConfig()), EnclaveState.load_or_create(self.state_path)
        if not self.state_path.exists():
            raise IntegrityError(f"enclave state {self.state_path} is missing")
        state = EnclaveState.load(self.state_path)
        engine = Engine.open(self.snapshot, state)
        if self.config is not None:
            # layout settings are fixed at creation; query-time settings follow the file
            c = self.config
            engine.config = engine.config.with_(
                padding_mode=c.padding_mode, pad_target=c.pad_target, pad_targets=c.pad_targets,
                planner=c.planner, fast_insert=c.fast_insert,
            )
        return engine, state

    def save(self, engine: Engine, state: EnclaveState) -> int:
        tmp = self.snapshot.with_name(SNAPSHOT + ".tmp")
        generation = engine.seal(tmp, state)
        tmp.replace(self.snapshot)
        state.save(self.state_path)
        return generation


def _print_result(res: QueryResult, fmt: str, out) -> None:
    if not res.columns:
        if res.count is not None:
            print(f"{res.count} row(s) affected", file=out)
        return
    rows = res.render_rows()
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(res.names)
        w.writerows(rows)
        return
    widths = [max([len(n)] + [len(r[i]) for r in rows]) for i, n in enumerate(res.names)]
    print(" | ".join(n.ljust(w) for n, w in zip(res.names, widths)), file=out)
    print("-+-".join("-" * w for w in widths), file=out)
    for r in rows:
        print(" | ".join(v.ljust(w) for v, w in zip(r, widths)), file=out)
    print(f"({len(rows)} row{'s' if len(rows) != 1 else ''})", file=out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="obliq", description="Oblivious relational query engine.")
    p.add_argument("--db", default="obliq-db", help="database directory (default: ./obliq-db)")
    p.add_argument("--config", help="config file of 'key = value' lines")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("create", help="run CREATE TABLE statements (creates the database if needed)")
    c.add_argument("sql", nargs="+", help="statements; several may be separated by ';'")

    ld = sub.add_parser("load", help="load a CSV file with a header row into a table")
    ld.add_argument("table")
    ld.add_argument("csv")

    q = sub.add_parser("query", help="run SQL statements")
    q.add_argument("sql", nargs="+")
    q.add_argument("--trace-out", help="write the access trace of these statements to a file")
    q.add_argument("--explain", action="store_true", help="print the plan report of each statement")
    q.add_argument("--format", choices=("table", "csv"), default="table")
    q.add_argument("--continuous", action="store_true", help="let the planner choose the Continuous select")
    q.add_argument("--padding", action="store_true", help="padding mode: pad results, planner off")
    q.add_argument("--pad-target", type=int, help="padded result size (default: table capacity)")

    b = sub.add_parser("bench", help="run the workload-mix benchmark on a scratch database")
    b.add_argument("--rows", type=int, default=10_000)
    b.add_argument("--small-rows", type=int)

    t = sub.add_parser("trace-diff", help="compare two exported traces")
    t.add_argument("a")
    t.add_argument("b")

    s = sub.add_parser("seal", help="write a sealed snapshot of the database")
    s.add_argument("--out", help="also copy the snapshot to this file")

    o = sub.add_parser("open", help="verify a sealed snapshot and make it current")
    o.add_argument("--file", help="snapshot to restore (default: the database's own)")
    return p


def run(argv: Sequence[str], out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    config = EngineConfig.from_file(args.config) if args.config else None
    db = Database(args.db, config)

    if args.command == "bench":
        rep = bench_suite(config.with_(cipher_seed=0) if config else None, args.rows, args.small_rows)
        print(rep.render(), file=out)
        return EXIT_OK if rep.ok else EXIT_QUERY

    if args.command == "trace-diff":
        a = AccessTrace.from_text(Path(args.a).read_text())
        b = AccessTrace.from_text(Path(args.b).read_text())
        verdict = trace_diff(a, b)
        print(verdict, file=out)
        return EXIT_OK if isinstance(verdict, Equal) else EXIT_QUERY

    if args.command == "open":
        state = EnclaveState.load(db.state_path) if db.state_path.exists() else None
        if state is None:
            raise UsageError(f"no enclave state in {db.dir}")
        src = Path(args.file) if args.file else db.snapshot
        engine = Engine.open(src, state)
        generation = db.save(engine, state)
        for name, table in engine.catalog.tables.items():
            print(f"{name}: {table.live} rows, capacity {table.capacity}, storage {'+'.join(sorted(table.methods))}", file=out)
        print(f"opened {src} (sealed as generation {generation})", file=out)
        return EXIT_OK

    engine, state = db.open(create=args.command == "create")
    stored = engine.config
    try:
        if args.command == "create":
            for st in engine.execute_script(" ; ".join(args.sql)):
                print(f"{st.report.statement}: ok", file=out)
        elif args.command == "load":
            n = engine.load_csv(args.csv, args.table)
            print(f"loaded {n} row(s) into {args.table}", file=out)
        elif args.command == "query":
            changes: dict[str, object] = {}
            if args.continuous:
                changes["planner"] = stored.planner.__class__(**{**vars(stored.planner), "continuous_enabled": True})
            if args.padding:
                changes["padding_mode"] = True
            if args.pad_target is not None:
                changes["pad_target"] = args.pad_target
            engine.config = stored.with_(**changes)
            start = engine.memory.trace.seq
            for res in engine.execute_script(" ; ".join(args.sql)):
                _print_result(res, args.format, out)
                if args.explain:
                    print(res.report.render(), file=out)
            if args.trace_out:
                n = engine.trace_export(args.trace_out, since=start)
                print(f"wrote {n} trace events to {args.trace_out}", file=out)
    finally:
        engine.config = stored
    generation = db.save(engine, state)
    if args.command == "seal":
        if args.out:
            shutil.copyfile(db.snapshot, args.out)
        print(f"sealed generation {generation}", file=out)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except IntegrityError as e:
        print(f"integrity violation: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ObliqError, UsageError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_QUERY


if __name__ == "__main__":
    sys.exit(main())
