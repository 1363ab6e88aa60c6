"""Boolean predicates over one row, evaluated inside the enclave.

Evaluation touches no untrusted memory; operators call the compiled
predicate on rows they have already read.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable, Union

from .errors import QueryError
from .schema import Row, Schema

_OPS: dict[str, Callable[[object, object], bool]] = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
}
_FLIP = {"=": "=", "!=": "!=", "<": ">", ">": "<", "<=": ">=", ">=": "<="}

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class Cmp:
    column: str
    op: str
    value: int | str

    def __post_init__(self) -> None:
        if self.op not in _OPS:
            raise QueryError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class And:
    parts: tuple[Pred, ...]


@dataclass(frozen=True)
class Or:
    parts: tuple[Pred, ...]


@dataclass(frozen=True)
class Not:
    part: Pred


@dataclass(frozen=True)
class Const:
    value: bool


Pred = Union[Cmp, And, Or, Not, Const]
TRUE = Const(True)
FALSE = Const(False)


def resolve(schema: Schema, name: str) -> int:
    """Column position, accepting ``table.col`` where the schema has ``col``."""
    names = schema.names
    if name in names:
        return names.index(name)
    if "." in name:
        bare = name.split(".", 1)[1]
        if bare in names:
            return names.index(bare)
    else:
        hits = [i for i, n in enumerate(names) if n.endswith("." + name)]
        if len(hits) == 1:
            return hits[0]
        if len(hits) > 1:
            raise QueryError(f"ambiguous column {name!r}")
    raise QueryError(f"unknown column {name!r}")


def compile_pred(pred: Pred, schema: Schema) -> Callable[[Row], bool]:
    """Bind column names and literal types; returns ``row -> bool``."""
    if isinstance(pred, Const):
        v = pred.value
        return lambda row: v
    if isinstance(pred, Cmp):
        i = resolve(schema, pred.column)
        col = schema.columns[i]
        value = col.parse(pred.value) if isinstance(pred.value, str) and col.type != "text" else col.check(pred.value)
        fn = _OPS[pred.op]
        return lambda row: fn(row[i], value)
    if isinstance(pred, Not):
        inner = compile_pred(pred.part, schema)
        return lambda row: not inner(row)
    parts = [compile_pred(p, schema) for p in pred.parts]
    if isinstance(pred, And):
        return lambda row: all(p(row) for p in parts)
    return lambda row: any(p(row) for p in parts)


def key_range(pred: Pred, schema: Schema, column: str) -> tuple[int, int] | None:
    """Tightest ``[lo, hi]`` on ``column`` implied by top-level conjuncts.

    Returns ``None`` when no conjunct constrains the column, in which case
    an index cannot narrow the scan. The full predicate is still applied to
    every row the index yields, so the range only has to be implied, not
    exact.
    """
    ki = schema.index(column)
    col = schema.columns[ki]
    conjuncts = pred.parts if isinstance(pred, And) else (pred,)
    lo, hi = INT64_MIN, INT64_MAX
    hit = False
    for c in conjuncts:
        if not isinstance(c, Cmp) or c.op == "!=":
            continue
        try:
            if resolve(schema, c.column) != ki:
                continue
        except QueryError:
            continue
        v = col.parse(c.value) if isinstance(c.value, str) else col.check(c.value)
        hit = True
        if c.op in ("=", ">="):
            lo = max(lo, v)
        if c.op in ("=", "<="):
            hi = min(hi, v)
        if c.op == ">":
            lo = max(lo, v + 1)
        if c.op == "<":
            hi = min(hi, v - 1)
    return (lo, hi) if hit else None


def columns_of(pred: Pred) -> set[str]:
    if isinstance(pred, Cmp):
        return {pred.column}
    if isinstance(pred, Not):
        return columns_of(pred.part)
    if isinstance(pred, Const):
        return set()
    return set().union(*(columns_of(p) for p in pred.parts))


def flip(op: str) -> str:
    return _FLIP[op]
