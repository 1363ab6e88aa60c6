"""Result tables: flat regions of declared size holding live and dummy rows."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ResultExceedsPad
from ..flat import FlatStore
from ..schema import Row, Schema
from .sources import ExecContext, FlatSource


@dataclass
class ResultTable:
    """``size`` is the declared length, part of the leakage; ``live`` is not."""

    store: FlatStore
    live: int
    algorithm: str = ""

    @property
    def schema(self) -> Schema:
        return self.store.schema

    @property
    def size(self) -> int:
        return self.store.capacity

    def source(self) -> FlatSource:
        return FlatSource(self.store)

    def drop(self) -> None:
        self.store.drop()


def new_result(ctx: ExecContext, schema: Schema, size: int, init: bool, label: str = "result") -> FlatStore:
    """Region for ``size`` rows. ``init`` writes dummies first."""
    return FlatStore(ctx.memory, schema, size, ctx.block_size, label=label, init=init)


def pad_result(ctx: ExecContext, result: ResultTable, target: int) -> ResultTable:
    """Copy ``result`` into a region of exactly ``target`` rows.

    Reads every source block once and writes every target block once, so
    the trace depends on the two sizes only.
    """
    if result.live > target:
        raise ResultExceedsPad(f"{result.live} live rows do not fit a pad of {target}")
    if target < result.size:
        raise ValueError(f"pad target {target} is below the declared size {result.size}")
    if target == result.size:
        return result
    out = new_result(ctx, result.schema, target, init=False, label="padded")
    for a, row in enumerate(result.store.scan()):
        out.write(a, row)
    for a in range(result.size, target):
        out.write(a, None)
    result.drop()
    return ResultTable(out, result.live, result.algorithm)


def materialize_client_result(result: ResultTable) -> list[Row]:
    """Strip dummies for the client. This step is not oblivious, by design:
    it models decryption on the client side of the channel."""
    return result.store.rows()
