"""Equi-joins: enclave hash join, chunk-sort join, and the no-oblivious-memory sort join.

``left`` is the primary side. The two sort joins require a foreign-key
relationship: every right row matches at most one left row. A post-join
predicate is applied in the enclave when each output row is formed, so it
never changes the trace.
"""

from __future__ import annotations

import math
import struct
from typing import Callable

from ..errors import BudgetExceeded, FkViolation, JoinFanoutExceeded
from ..predicate import resolve
from ..schema import Row, Schema
from .bitonic import SortRegion, block_sort, network_sort, next_pow2, prev_pow2
from .result import ResultTable, new_result
from .sources import ExecContext, Source

Pred = Callable[[Row], bool]

_TAG = struct.Struct("<BB")  # real flag, origin (0 left, 1 right)


def joined_schema(left: Schema, right: Schema, lname: str = "l", rname: str = "r") -> Schema:
    return left.concat(right, lname, rname)


def _always(row: Row) -> bool:
    return True


def hash_chunk_rows(ctx: ExecContext, left_rows: int, row_size: int) -> int:
    return min(left_rows, ctx.budget.available // row_size)


def join_hash(
    ctx: ExecContext,
    left: Source,
    right: Source,
    lcol: str,
    rcol: str,
    post: Pred = _always,
    chunk_rows: int | None = None,
    fanout: int | None = None,
    names: tuple[str, str] = ("l", "r"),
) -> ResultTable:
    """Hash chunks of ``left`` in the enclave and stream ``right`` past each.

    Every right row produces exactly ``fanout`` output writes per chunk (a
    joined row or a dummy), so the output has ``chunks * |right| * fanout``
    slots. A right row matching more than ``fanout`` rows of one chunk is
    an error rather than a leak.
    """
    n, m = len(left), len(right)
    w = fanout or ctx.join_fanout
    li, ri = resolve(left.schema, lcol), resolve(right.schema, rcol)
    rs = left.schema.row_size
    chunk = chunk_rows if chunk_rows is not None else hash_chunk_rows(ctx, n, rs)
    chunk = min(chunk, n) if n else 1
    if chunk < 1:
        raise BudgetExceeded("no oblivious memory left for even one hashed row")
    chunks = max(1, math.ceil(n / chunk))
    schema = joined_schema(left.schema, right.schema, *names)
    out = new_result(ctx, schema, chunks * m * w, init=False, label="hash-join")
    pos = 0
    live = 0
    left_rows = left.rows()
    with ctx.budget.alloc(chunk * rs) as buf:
        for c in range(chunks):
            table: dict[object, list[Row]] = {}
            for _ in range(min(chunk, n - c * chunk)):
                row = next(left_rows)
                if row is not None:
                    table.setdefault(row[li], []).append(row)
            buf.data = table
            for r2 in right.rows():
                hits = [] if r2 is None else [r1 + r2 for r1 in table.get(r2[ri], ())]
                hits = [h for h in hits if post(h)]
                if len(hits) > w:
                    raise JoinFanoutExceeded(f"a right row matched {len(hits)} rows of one chunk; fanout is {w}")
                for s in range(w):
                    out.write(pos, hits[s] if s < len(hits) else None)
                    pos += 1
                live += len(hits)
    for _ in left_rows:  # a source exhausts its pass even if n was rounded
        pass
    return ResultTable(out, live, "hash-join")


class _Union:
    """Both inputs in one region, tagged by origin, padded to a power of two."""

    def __init__(self, ctx: ExecContext, left: Source, right: Source, li: int, ri: int, label: str):
        self.left_schema, self.right_schema = left.schema, right.schema
        self.li, self.ri = li, ri
        self.total = len(left) + len(right)
        self.n = next_pow2(self.total)
        self.width = max(left.schema.row_size, right.schema.row_size)
        self.sr = SortRegion(ctx.memory, self.n, _TAG.size + self.width, label=label)
        a = 0
        for origin, src in ((0, left), (1, right)):
            for row in src.rows():
                self.sr.write(a, self.encode(origin, row))
                a += 1
        for a in range(self.total, self.n):
            self.sr.write(a, self.encode(0, None))

    def encode(self, origin: int, row: Row | None) -> bytes:
        size = self.sr.item_size
        if row is None:
            return bytes(size)
        schema = self.left_schema if origin == 0 else self.right_schema
        return _TAG.pack(1, origin) + schema.encode(row, self.width)

    def decode(self, item: bytes) -> tuple[int, Row] | None:
        real, origin = _TAG.unpack_from(item)
        if not real:
            return None
        schema = self.left_schema if origin == 0 else self.right_schema
        return origin, schema.decode(item[_TAG.size:])

    def key(self, item: bytes) -> tuple:
        d = self.decode(item)
        if d is None:
            return (1,)
        origin, row = d
        return (0, row[self.li] if origin == 0 else row[self.ri], origin)

    def merge(self, ctx: ExecContext, post: Pred, algorithm: str, names: tuple[str, str]) -> ResultTable:
        """Scan the sorted prefix, pairing each right row with the left row before it."""
        schema = joined_schema(self.left_schema, self.right_schema, *names)
        out = new_result(ctx, schema, self.total, init=False, label=algorithm)
        last: Row | None = None
        live = 0
        for a in range(self.total):
            d = self.decode(self.sr.read(a))
            joined = None
            if d is not None:
                origin, row = d
                if origin == 0:
                    if last is not None and last[self.li] == row[self.li]:
                        raise FkViolation(f"two primary rows share key {row[self.li]!r}")
                    last = row
                elif last is not None and last[self.li] == row[self.ri]:
                    cand = last + row
                    if post(cand):
                        joined = cand
            out.write(a, joined)
            live += joined is not None
        self.sr.drop()
        return ResultTable(out, live, algorithm)


def opaque_chunk_rows(ctx: ExecContext, item_size: int, n: int) -> int:
    """Chunk length: the largest power of two such that two chunks fit the budget."""
    return min(prev_pow2(ctx.budget.available // (2 * item_size)), n)


def join_opaque(
    ctx: ExecContext,
    left: Source,
    right: Source,
    lcol: str,
    rcol: str,
    post: Pred = _always,
    chunk_rows: int | None = None,
    names: tuple[str, str] = ("l", "r"),
) -> ResultTable:
    """Sort the union with enclave-sorted chunks merged by a block bitonic network."""
    li, ri = resolve(left.schema, lcol), resolve(right.schema, rcol)
    item = _TAG.size + max(left.schema.row_size, right.schema.row_size)
    n = next_pow2(len(left) + len(right))
    chunk = chunk_rows if chunk_rows is not None else opaque_chunk_rows(ctx, item, n)
    if chunk < 1:
        raise BudgetExceeded("no oblivious memory left for a sort chunk")
    with ctx.budget.alloc(2 * chunk * item):
        u = _Union(ctx, left, right, li, ri, "opaque-sort")
        block_sort(u.sr, chunk, u.key)
    return u.merge(ctx, post, "opaque-join", names)


def join_zero_om(
    ctx: ExecContext,
    left: Source,
    right: Source,
    lcol: str,
    rcol: str,
    post: Pred = _always,
    enclave_rows: int | None = None,
    names: tuple[str, str] = ("l", "r"),
) -> ResultTable:
    """Full element-level bitonic sort of the union; no oblivious memory at all."""
    li, ri = resolve(left.schema, lcol), resolve(right.schema, rcol)
    u = _Union(ctx, left, right, li, ri, "0om-sort")
    network_sort(u.sr, u.key, ctx.enclave_sort_rows if enclave_rows is None else enclave_rows)
    return u.merge(ctx, post, "0om-join", names)


JOINS = {"hash": join_hash, "opaque": join_opaque, "0om": join_zero_om}
