"""Scan aggregates and grouped aggregation, both fused with the filter.

The accumulators live in the enclave. A plain aggregate is one pass over the
source and nothing else. Grouped aggregation adds one write per output group;
its group table is charged to the oblivious budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from ..errors import QueryError, ResultExceedsPad
from ..predicate import resolve
from ..schema import INT, TEXT, Column, Row, Schema
from .result import ResultTable, new_result
from .sources import ExecContext, Source

FUNCS = ("count", "sum", "min", "max", "avg")


@dataclass(frozen=True)
class AggSpec:
    func: str
    column: str | None = None  # None means COUNT(*)

    def __post_init__(self) -> None:
        if self.func not in FUNCS:
            raise QueryError(f"unknown aggregate {self.func!r}")
        if self.column is None and self.func != "count":
            raise QueryError(f"{self.func.upper()} needs a column")

    @property
    def label(self) -> str:
        return f"{self.func}({self.column or '*'})"


class _Acc:
    __slots__ = ("func", "col", "n", "v")

    def __init__(self, func: str, col: int | None):
        self.func, self.col = func, col
        self.n = 0
        self.v = None

    def add(self, row: Row) -> None:
        if self.col is None:
            self.n += 1
            return
        x = row[self.col]
        self.n += 1
        f = self.func
        if f in ("sum", "avg"):
            self.v = x if self.v is None else self.v + x
        elif f == "min":
            self.v = x if self.v is None or x < self.v else self.v
        elif f == "max":
            self.v = x if self.v is None or x > self.v else self.v

    def result(self) -> int | str | Fraction | None:
        if self.func == "count":
            return self.n
        if self.n == 0:
            return None
        if self.func == "avg":
            return Fraction(self.v, self.n)
        return self.v


def _bind(specs: list[AggSpec], schema: Schema) -> list[int | None]:
    cols = []
    for s in specs:
        if s.column is None:
            cols.append(None)
            continue
        i = resolve(schema, s.column)
        if s.func in ("sum", "avg") and schema.columns[i].type == TEXT:
            raise QueryError(f"{s.func.upper()} of text column {s.column}")
        cols.append(i)
    return cols


def aggregate(source: Source, specs: list[AggSpec], pred: Callable[[Row], bool]) -> list[object]:
    """One pass; returns one value per spec.

    COUNT of nothing is 0; SUM, MIN, MAX, and AVG of nothing are ``None``.
    AVG is an exact :class:`~fractions.Fraction`.
    """
    cols = _bind(specs, source.schema)
    accs = [_Acc(s.func, c) for s, c in zip(specs, cols)]
    for row in source.rows():
        if row is not None and pred(row):
            for a in accs:
                a.add(row)
    return [a.result() for a in accs]


def group_schema(source_schema: Schema, group_col: int, specs: list[AggSpec]) -> Schema:
    """Group column first, then one column per aggregate (two for AVG)."""
    cols = [source_schema.columns[group_col]]
    for s in specs:
        if s.func == "avg":
            cols.append(Column(s.label + "#sum", INT))
            cols.append(Column(s.label + "#count", INT))
        elif s.func in ("min", "max"):
            src = source_schema.columns[resolve(source_schema, s.column)]
            cols.append(Column(s.label, src.type, src.width))
        else:
            cols.append(Column(s.label, INT))
    return Schema(tuple(cols))


def group_bytes(source_schema: Schema, group_col: int, specs: list[AggSpec]) -> int:
    """Oblivious memory one group costs: its key plus 8 bytes of state per value."""
    key = source_schema.columns[group_col]
    width = key.width if key.type == TEXT else 8
    return width + 8 * sum(2 if s.func == "avg" else 1 for s in specs)


def group_aggregate(
    ctx: ExecContext,
    source: Source,
    group_column: str,
    specs: list[AggSpec],
    pred: Callable[[Row], bool],
    pad_to: int | None = None,
) -> ResultTable:
    """One pass into an enclave group table, then one write per group.

    The output size is the number of groups; it is part of the leakage in
    the same way a selection's result size is. With ``pad_to`` the output
    has exactly that many slots instead, so the group count stays hidden.
    """
    schema = source.schema
    gi = resolve(schema, group_column)
    cols = _bind(specs, schema)
    per_group = group_bytes(schema, gi, specs)
    groups: dict[object, list[_Acc]] = {}
    charges = []
    try:
        for row in source.rows():
            if row is None or not pred(row):
                continue
            key = row[gi]
            accs = groups.get(key)
            if accs is None:
                charges.append(ctx.budget.alloc(per_group))
                accs = groups[key] = [_Acc(s.func, c) for s, c in zip(specs, cols)]
            for a in accs:
                a.add(row)
        size = len(groups)
        if pad_to is not None:
            if size > pad_to:
                raise ResultExceedsPad(f"{size} groups do not fit a pad of {pad_to}")
            size = pad_to
        out_schema = group_schema(schema, gi, specs)
        out = new_result(ctx, out_schema, size, init=False, label="groups")
        for addr, key in enumerate(sorted(groups)):
            values: list[object] = [key]
            for a in groups[key]:
                if a.func == "avg":
                    values += [a.v, a.n]
                else:
                    values.append(a.result())
            out.write(addr, tuple(values))
        for addr in range(len(groups), size):
            out.write(addr, None)
    finally:
        for c in charges:
            c.release()
    return ResultTable(out, len(groups), "group")
