"""The execution driver: SQL in, oblivious operators out.

Each statement becomes a short sequence of phases (planner scan, select,
join, aggregate, mutation, ...). Every untrusted-memory event a statement
causes falls inside exactly one phase, and the phase list with its sizes is
the statement's :class:`PlanReport`: the algorithms chosen, the table and
result sizes, and the event counts. That is the declared leakage.
"""

from __future__ import annotations

import csv
import os
import pickle
import random
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

from . import sealing
from .catalog import FLAT, INDEXED, Catalog, Table
from .config import EngineConfig
from .errors import CsvError, HashOverflow, QueryError, TableFull
from .memory import AccessTrace, ObliviousBudget, TraceRecorder, UntrustedMemory
from .operators import select as ops_select
from .operators.aggregate import AggSpec, aggregate, group_aggregate
from .operators.join import JOINS, joined_schema
from .operators.result import ResultTable, materialize_client_result
from .operators.sources import ExecContext, FlatSource, IndexRangeSource, OramScanSource, Source
from .planner import SELECT_ALGORITHMS, plan_join, plan_select
from .predicate import compile_pred, key_range, resolve
from .schema import DATE, INT, TEXT, Column, Row, Schema
from .sql import (
    AggCall,
    Assign,
    ColRef,
    CreateTable,
    Delete,
    DropTable,
    Insert,
    Select,
    Star,
    Statement,
    Update,
    parse_sql,
    split_statements,
)

JOIN_HINTS = {"hash": "hash", "hash_join": "hash", "opaque": "opaque", "0om": "0om", "zero_om": "0om"}


class _SecureRandom(random.SystemRandom):
    """OS randomness for ORAM leaves outside test mode; pickles as a fresh instance."""

    def __reduce__(self) -> tuple:
        return (_SecureRandom, ())


@dataclass
class Phase:
    op: str
    table: str
    algorithm: str = ""
    input_size: int = 0
    output_size: int = 0
    start_seq: int = 0
    end_seq: int = 0

    @property
    def events(self) -> int:
        return self.end_seq - self.start_seq


@dataclass
class PlanReport:
    statement: str
    phases: list[Phase] = field(default_factory=list)
    start_seq: int = 0
    end_seq: int = 0

    @property
    def trace_length(self) -> int:
        return self.end_seq - self.start_seq

    @property
    def algorithms(self) -> list[str]:
        return [p.algorithm for p in self.phases if p.algorithm]

    def leakage(self) -> tuple:
        """Everything the report declares, as a comparable value."""
        return (
            self.statement,
            tuple((p.op, p.table, p.algorithm, p.input_size, p.output_size, p.events) for p in self.phases),
        )

    def render(self) -> str:
        lines = [f"{self.statement}: {self.trace_length} events (seq {self.start_seq}..{self.end_seq})"]
        for p in self.phases:
            algo = f" [{p.algorithm}]" if p.algorithm else ""
            lines.append(
                f"  {p.op}{algo} on {p.table}: |T|={p.input_size} |R|={p.output_size} "
                f"events={p.events} seq {p.start_seq}..{p.end_seq}"
            )
        return "\n".join(lines)


@dataclass
class QueryResult:
    columns: list[Column]
    rows: list[tuple]
    report: PlanReport
    count: int | None = None  # rows affected, for statements that change data

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def render_rows(self) -> list[list[str]]:
        return [[format_value(c, v) for c, v in zip(self.columns, r)] for r in self.rows]


def format_value(column: Column, value: object) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, Fraction):
        text = f"{float(value):.6f}".rstrip("0").rstrip(".")
        return text or "0"
    if column.type == DATE and isinstance(value, int):
        return column.render(value)
    return str(value)


class Engine:
    """One database session: catalog, untrusted memory, and the oblivious budget."""

    def __init__(self, config: EngineConfig | None = None):
        self.config = config = config or EngineConfig()
        seed = config.cipher_seed
        self.memory = UntrustedMemory(seed=seed)
        self.budget = ObliviousBudget(config.oblivious_memory_bytes)
        self.rng: random.Random = random.Random(seed) if seed is not None else _SecureRandom()
        hash_seed = seed if seed is not None else int.from_bytes(os.urandom(8), "little")
        self.catalog = Catalog(
            self.memory, self.budget, self.rng, config.block_size, config.oram_recursion, config.index_fanout
        )
        self.ctx = ExecContext(
            self.memory, self.budget, config.block_size, self.rng,
            hash_seed=hash_seed, join_fanout=config.join_fanout, enclave_sort_rows=config.enclave_sort_rows,
        )
        self.reports: list[PlanReport] = []
        self._report: PlanReport | None = None

    # -- public surface ---------------------------------------------------------------

    def execute(self, sql: str) -> QueryResult:
        return self.run(parse_sql(sql))

    def execute_script(self, text: str) -> list[QueryResult]:
        return [self.execute(s) for s in split_statements(text)]

    def table(self, name: str) -> Table:
        return self.catalog[name]

    @property
    def last_report(self) -> PlanReport | None:
        return self.reports[-1] if self.reports else None

    def run(self, st: Statement) -> QueryResult:
        kind = {"CreateTable": "create", "DropTable": "drop"}.get(type(st).__name__, type(st).__name__.lower())
        self._report = report = PlanReport(kind, start_seq=self.memory.trace.seq)
        try:
            if isinstance(st, Select):
                result = self._select(st)
            elif isinstance(st, Insert):
                result = self._insert(st)
            elif isinstance(st, Delete):
                result = self._delete(st)
            elif isinstance(st, Update):
                result = self._update(st)
            elif isinstance(st, CreateTable):
                result = self._create(st)
            elif isinstance(st, DropTable):
                self.catalog.drop(st.name)
                result = self._done(0)
            else:  # pragma: no cover - the parser produces nothing else
                raise QueryError(f"unsupported statement {st!r}")
        finally:
            report.end_seq = self.memory.trace.seq
            self._report = None
            self.reports.append(report)
        result.report = report
        return result

    def insert_rows(self, name: str, rows: Sequence[Sequence[object]], bulk: bool | None = None) -> int:
        """Insert already-typed rows. A fresh empty table is bulk loaded."""
        table = self.catalog[name]
        rows = [table.schema.validate(r) for r in rows]
        own = self._report is None
        if own:
            self._report = PlanReport("load", start_seq=self.memory.trace.seq)
        try:
            self._insert_rows(table, rows, bulk)
        finally:
            if own:
                self._report.end_seq = self.memory.trace.seq
                self.reports.append(self._report)
                self._report = None
        return len(rows)

    def load_csv(self, path: str | Path, name: str) -> int:
        """Load a CSV file with a header row naming the table's columns."""
        table = self.catalog[name]
        schema = table.schema
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None:
                return 0
            header = [h.strip() for h in header]
            if sorted(header) != sorted(schema.names):
                raise CsvError(f"header {header} does not match columns {schema.names}", 1)
            order = [header.index(n) for n in schema.names]
            rows = []
            for fields_ in reader:
                line = reader.line_num
                if not fields_ or all(not x.strip() for x in fields_):
                    continue
                if len(fields_) != len(header):
                    raise CsvError(f"expected {len(header)} fields, got {len(fields_)}", line)
                try:
                    rows.append(tuple(c.parse(fields_[i].strip() if c.type != TEXT else fields_[i]) for c, i in zip(schema.columns, order)))
                except QueryError as e:
                    raise CsvError(str(e), line) from None
        if not rows:
            return 0
        return self.insert_rows(name, rows)

    def trace(self, since: int | None = None) -> AccessTrace:
        return self.memory.trace.full() if since is None else self.memory.trace.since(since)

    def trace_export(self, path: str | Path, since: int | None = None) -> int:
        trace = self.trace(since)
        Path(path).write_text(trace.to_text())
        return len(trace)

    # -- sealing ----------------------------------------------------------------------

    def seal(self, path: str | Path, state: sealing.EnclaveState) -> int:
        """Write an encrypted snapshot; returns its generation."""
        saved = self.memory.trace
        reports = self.reports
        self.memory.trace = TraceRecorder.starting_at(saved.seq)
        self.reports = []
        try:
            payload = pickle.dumps(self, protocol=pickle.HIGHEST_PROTOCOL)
        finally:
            self.memory.trace = saved
            self.reports = reports
        blob = sealing.seal(state, payload)
        tmp = Path(str(path) + ".tmp")
        tmp.write_bytes(blob)
        os.replace(tmp, path)
        return state.generation

    @classmethod
    def open(cls, path: str | Path, state: sealing.EnclaveState) -> Engine:
        payload, generation = sealing.unseal(state, Path(path).read_bytes())
        state.generation = max(state.generation, generation)
        engine = pickle.loads(payload)
        if not isinstance(engine, cls):
            raise QueryError("sealed file does not hold a database")
        return engine

    # -- phases -----------------------------------------------------------------------

    @contextmanager
    def _phase(self, op: str, table: str, algorithm: str = "", input_size: int = 0) -> Iterator[Phase]:
        ph = Phase(op, table, algorithm, input_size, start_seq=self.memory.trace.seq)
        try:
            yield ph
        finally:
            ph.end_seq = self.memory.trace.seq
            self._report.phases.append(ph)

    def _done(self, count: int) -> QueryResult:
        return QueryResult([], [], None, count)  # type: ignore[arg-type]

    # -- DDL and DML ------------------------------------------------------------------

    def _create(self, st: CreateTable) -> QueryResult:
        schema = Schema(tuple(Column(c.name, c.type, c.width) for c in st.columns))
        methods = {"flat": {FLAT}, "index": {INDEXED}, "both": {FLAT, INDEXED}}[st.storage]
        capacity = st.capacity if st.capacity is not None else self.config.default_capacity
        with self._phase("create", st.name, st.storage, capacity):
            self.catalog.create(st.name, schema, methods, capacity, st.key)
        return self._done(0)

    def _insert(self, st: Insert) -> QueryResult:
        table = self.catalog[st.table]
        rows = [table.schema.validate(r) for r in st.rows]
        self._insert_rows(table, rows, bulk=False)
        return self._done(len(rows))

    def _insert_rows(self, table: Table, rows: list[Row], bulk: bool | None) -> None:
        if table.live + len(rows) > table.capacity:
            raise TableFull(f"{len(rows)} more rows do not fit table {table.name} ({table.live}/{table.capacity})")
        if not rows:
            return
        if bulk is not False and table.fresh and table.live == 0:
            with self._phase("load", table.name, "bulk", table.capacity) as ph:
                table.bulk_load(rows)
                ph.output_size = len(rows)
            return
        for row in rows:
            fast = self.config.fast_insert and table.flat is not None and table.flat.fast_ok and table.flat.fast_pos < table.capacity
            algo = "+".join(a for a, on in (("fast" if fast else "scan", table.flat is not None), ("index", table.index is not None)) if on)
            with self._phase("insert", table.name, algo, table.capacity) as ph:
                table.insert(row, fast=fast)
                ph.output_size = 1

    def _delete(self, st: Delete) -> QueryResult:
        table = self.catalog[st.table]
        pred = compile_pred(st.where, table.schema)
        with self._phase("delete", table.name, table.storage, table.capacity) as ph:
            n = table.delete_where(pred, self._mutation_range(table, st.where))
            # an index delete reveals its count; a flat one does not
            ph.output_size = n if table.index is not None else 0
        return self._done(n)

    def _mutation_range(self, table: Table, where) -> tuple[int, int] | None:
        if table.index is None:
            return None
        return key_range(where, table.schema, table.key_column)

    def _update(self, st: Update) -> QueryResult:
        table = self.catalog[st.table]
        schema = table.schema
        pred = compile_pred(st.where, schema)
        fn = _compile_assignments(schema, st.assignments)
        with self._phase("update", table.name, table.storage, table.capacity) as ph:
            n = table.update_where(pred, fn, self._mutation_range(table, st.where))
            ph.output_size = n if table.index is not None else 0
        return self._done(n)

    # -- SELECT -----------------------------------------------------------------------

    def _select(self, st: Select) -> QueryResult:
        if st.join is not None:
            return self._join(st)
        table = self.catalog[st.table]
        schema = table.schema
        pred = compile_pred(st.where, schema)
        if st.group_by is not None:
            source = self._full_source(table) if self.config.padding_mode else self._source(table, st)
            return self._group(st, table.name, source, pred, self.config.pad_for(table.name, table.capacity))
        if st.aggregates:
            return self._aggregate(st, table.name, self._source(table, st), pred)
        source = self._full_source(table) if self.config.padding_mode else self._source(table, st)
        res = self._filter(table.name, source, pred, self._select_hint(st), self.config.pad_for(table.name, table.capacity))
        return self._project(st, schema, res)

    def _select_hint(self, st: Select) -> str | None:
        for h in st.hints:
            if h in SELECT_ALGORITHMS:
                return h
            raise QueryError(f"unknown select hint {h!r}")
        return None

    def _full_source(self, table: Table) -> Source:
        return FlatSource(table.flat) if table.flat is not None else OramScanSource(table)

    def _source(self, table: Table, st: Select) -> Source:
        """Index range when the WHERE clause bounds the key, else a full scan.

        A table stored both ways first walks the range for at most as many
        steps as would cost one flat scan; stopping early reveals only that
        the range is long, a function of its length.
        """
        if table.index is None:
            return self._full_source(table)
        rng = key_range(st.where, table.schema, table.key_column)
        if rng is None:
            return self._full_source(table)
        if table.flat is None:
            return IndexRangeSource(table, *rng)
        limit = table.capacity // (2 * table.index.oram.events_per_access)
        if limit < 1:
            return FlatSource(table.flat)
        with self._phase("index-probe", table.name, "", table.capacity) as ph:
            n = 0
            for _ in table.index.range(*rng):
                n += 1
                if n > limit:
                    break
            ph.output_size = n
        if n <= limit:
            return IndexRangeSource(table, *rng)
        return FlatSource(table.flat)

    def _filter(self, name: str, source: Source, pred, hint: str | None, pad: int) -> ResultTable:
        if self.config.padding_mode:
            # the planner is off: one fixed algorithm and a fixed output size
            with self._phase("select", name, "small", len(source)) as ph:
                res = ops_select.select_small(self.ctx, source, pred, pad)
                ph.output_size = res.size
            return res
        with self._phase("plan", name) as ph:
            try:
                choice, stats = plan_select(self.ctx, source, pred, self.config.planner, hint)
            except ValueError as e:
                raise QueryError(str(e)) from None
            ph.algorithm = choice.algorithm
            ph.input_size = stats.input_size
            ph.output_size = stats.match_count
        if choice.algorithm == "large" and not source.supports_large:
            raise QueryError("the Large algorithm needs a flat table scan")
        r = choice.out_size
        with self._phase("select", name, choice.algorithm, len(source)) as ph:
            try:
                res = self._run_select(choice.algorithm, source, pred, r, choice.buffer_rows)
            except HashOverflow:
                ph.algorithm = "hash-overflow"
                res = None
            if res is not None:
                ph.output_size = res.size
        if res is None:
            with self._phase("select", name, "small", len(source)) as ph:
                res = ops_select.select_small(self.ctx, source, pred, r)
                ph.output_size = res.size
        return res

    def _run_select(self, algo: str, source: Source, pred, r: int, buffer_rows: int) -> ResultTable:
        fn = ops_select.SELECTS[algo]
        try:
            if algo == "small":
                return fn(self.ctx, source, pred, r, buffer_rows=buffer_rows or None)
            if algo == "large":
                return fn(self.ctx, source, pred)
            if algo == "hash":
                # a forced Hash select with nothing to find still needs one bucket
                return fn(self.ctx, source, pred, max(r, 1))
            return fn(self.ctx, source, pred, r)
        except ValueError as e:
            raise QueryError(f"{algo} select cannot run here: {e}") from None

    def _project(self, st: Select, schema: Schema, res: ResultTable) -> QueryResult:
        cols = _output_columns(st.items, schema)
        idx = [i for i, _ in cols]
        rows = [tuple(r[i] for i in idx) for r in self._deliver(res)]
        return QueryResult([c for _, c in cols], rows, None)  # type: ignore[arg-type]

    def _deliver(self, res: ResultTable) -> list[Row]:
        """Read the result region once for the client, then free it."""
        with self._phase("output", "result", "", res.size) as ph:
            rows = materialize_client_result(res)
            ph.output_size = res.size
        res.drop()
        return rows

    def _aggregate(self, st: Select, name: str, source: Source, pred) -> QueryResult:
        calls = []
        for item in st.items:
            if not isinstance(item, AggCall):
                raise QueryError("plain columns next to aggregates need GROUP BY")
            calls.append(item)
        specs = [AggSpec(c.func, c.column) for c in calls]
        with self._phase("aggregate", name, "scan", len(source)) as ph:
            values = aggregate(source, specs, pred)
            ph.output_size = 1
        columns = [_agg_column(c, source.schema) for c in calls]
        return QueryResult(columns, [tuple(values)], None)  # type: ignore[arg-type]

    def _group(self, st: Select, name: str, source: Source, pred, pad: int) -> QueryResult:
        schema = source.schema
        gi = resolve(schema, st.group_by)
        specs: list[AggSpec] = []
        for item in st.items:
            if isinstance(item, AggCall):
                spec = AggSpec(item.func, item.column)
                if spec not in specs:
                    specs.append(spec)
            elif isinstance(item, ColRef):
                if resolve(schema, item.name) != gi:
                    raise QueryError(f"column {item.name} is neither grouped nor aggregated")
            else:
                raise QueryError("SELECT * cannot be grouped")
        padded = self.config.padding_mode
        with self._phase("group", name, "hash-table", len(source)) as ph:
            res = group_aggregate(self.ctx, source, st.group_by, specs, pred, pad_to=pad if padded else None)
            ph.output_size = res.size
        groups = self._deliver(res)
        offsets = {}
        pos = 1
        for s in specs:
            offsets[s] = pos
            pos += 2 if s.func == "avg" else 1
        rows = []
        for g in groups:
            out = []
            for item in st.items:
                if isinstance(item, ColRef):
                    out.append(g[0])
                    continue
                spec = AggSpec(item.func, item.column)
                o = offsets[spec]
                out.append(Fraction(g[o], g[o + 1]) if spec.func == "avg" else g[o])
            rows.append(tuple(out))
        columns = [schema.columns[gi] if isinstance(i, ColRef) else _agg_column(i, schema) for i in st.items]
        return QueryResult(columns, rows, None)  # type: ignore[arg-type]

    # -- JOIN -------------------------------------------------------------------------

    def _join(self, st: Select) -> QueryResult:
        lt = self.catalog[st.table]
        rt = self.catalog[st.join.table]
        if lt.name == rt.name:
            raise QueryError("self-joins are not supported")
        lcol, rcol = _join_columns(lt, rt, st.join.left, st.join.right)
        left, right = self._full_source(lt), self._full_source(rt)
        names = (lt.name, rt.name)
        jschema = joined_schema(left.schema, right.schema, *names)
        pred = compile_pred(st.where, jschema)
        hint = None
        for h in st.hints:
            if h not in JOIN_HINTS:
                raise QueryError(f"unknown join hint {h!r}")
            hint = JOIN_HINTS[h]
        with self._phase("plan-join", f"{lt.name},{rt.name}") as ph:
            try:
                choice = plan_join(
                    self.ctx, len(left), len(right), left.schema.row_size, right.schema.row_size,
                    self.config.planner, self.ctx.join_fanout, hint,
                )
            except ValueError as e:
                raise QueryError(str(e)) from None
            ph.algorithm = choice.algorithm
            ph.input_size = len(left) + len(right)
        fn = JOINS[choice.algorithm]
        kw: dict[str, object] = {"names": names}
        if choice.algorithm in ("hash", "opaque"):
            kw["chunk_rows"] = choice.chunk_rows
        with self._phase("join", f"{lt.name},{rt.name}", choice.algorithm, len(left) + len(right)) as ph:
            res = fn(self.ctx, left, right, lcol, rcol, pred, **kw)
            ph.output_size = res.size
        try:
            if st.group_by is not None:
                return self._group(st, "join", res.source(), lambda r: True, self.config.pad_for("join", res.size))
            if st.aggregates:
                return self._aggregate(st, "join", res.source(), lambda r: True)
            return self._project(st, jschema, res)
        finally:
            if res.store.region.id in self.memory.regions:
                res.drop()


def _join_columns(lt: Table, rt: Table, a: str, b: str) -> tuple[str, str]:
    """Assign the two ON columns to the left and right tables."""

    def side(name: str) -> set[str]:
        if "." in name:
            t, col = name.split(".", 1)
            out = set()
            if t == lt.name and col in lt.schema.names:
                out.add("l")
            if t == rt.name and col in rt.schema.names:
                out.add("r")
            if not out:
                raise QueryError(f"unknown column {name!r}")
            return out
        out = {s for s, tab in (("l", lt), ("r", rt)) if name in tab.schema.names}
        if not out:
            raise QueryError(f"unknown column {name!r}")
        return out

    sa, sb = side(a), side(b)
    bare = lambda n: n.split(".", 1)[1] if "." in n else n  # noqa: E731
    if "l" in sa and "r" in sb:
        return bare(a), bare(b)
    if "r" in sa and "l" in sb:
        return bare(b), bare(a)
    raise QueryError(f"join condition {a} = {b} must compare one column of each table")


def _output_columns(items, schema: Schema) -> list[tuple[int, Column]]:
    out = []
    for item in items:
        if isinstance(item, Star):
            out += list(enumerate(schema.columns))
        elif isinstance(item, ColRef):
            i = resolve(schema, item.name)
            out.append((i, schema.columns[i]))
        else:  # pragma: no cover - callers route aggregates elsewhere
            raise QueryError("unexpected aggregate")
    return out


def _agg_column(call: AggCall, schema: Schema) -> Column:
    if call.func in ("min", "max") and call.column is not None:
        src = schema.columns[resolve(schema, call.column)]
        return Column(call.label, src.type, src.width)
    return Column(call.label, INT)


def _compile_assignments(schema: Schema, assigns: Sequence[Assign]):
    steps = []
    for a in assigns:
        ci = resolve(schema, a.column)
        col = schema.columns[ci]
        if a.source is None:
            v = a.value
            v = col.parse(v) if isinstance(v, str) and col.type != TEXT else col.check(v)
            steps.append((ci, None, v))
            continue
        si = resolve(schema, a.source)
        if col.type == TEXT or schema.columns[si].type == TEXT:
            raise QueryError(f"arithmetic on text column in SET {a.column}")
        delta = a.value if a.op == "+" else -a.value
        steps.append((ci, si, delta))

    def fn(row: Row) -> Row:
        new = list(row)
        for ci, si, v in steps:
            new[ci] = v if si is None else row[si] + v
        return schema.validate(new)

    return fn
