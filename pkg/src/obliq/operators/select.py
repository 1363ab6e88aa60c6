"""Oblivious selection: Naive, Small, Large, Continuous, and Hash.

Each operator takes a source, a compiled predicate, and the declared output
size ``out_size``, and returns a result table. The trace of each depends on
the source shape, ``out_size``, and (for Small) the buffer size only.
"""

from __future__ import annotations

import math
from typing import Callable

from ..errors import BudgetExceeded, ContinuityViolated, HashOverflow, ResultExceedsPad
from ..oram import PathORAM
from ..schema import Row
from .result import ResultTable, new_result
from .sources import ExecContext, Source

Pred = Callable[[Row], bool]

HASH_DEPTH = 5
_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def hash_buckets(seed: int, i: int, buckets: int) -> tuple[int, int]:
    """The two bucket choices for input position ``i``. Hashes see positions, never rows."""
    return splitmix64(splitmix64(seed) ^ i) % buckets, splitmix64(splitmix64(seed + 1) ^ i) % buckets


def select_naive(ctx: ExecContext, source: Source, pred: Pred, out_size: int) -> ResultTable:
    """One ORAM access per input row into an output ORAM, then copy out."""
    schema = source.schema
    oram = PathORAM(ctx.memory, max(out_size, 1), schema.row_size, ctx.budget, ctx.rng, label="naive-out")
    j = 0
    for row in source.rows():
        if row is not None and pred(row):
            if j >= out_size:
                oram.close()
                raise ResultExceedsPad(f"more than {out_size} rows matched")
            oram.write(j, schema.encode(row))
            j += 1
        else:
            oram.dummy_access()
    out = new_result(ctx, schema, out_size, init=False)
    for k in range(out_size):
        data = oram.read(k)
        out.write(k, None if data is None else schema.decode(data))
    oram.close()
    return ResultTable(out, j, "naive")


def small_buffer_rows(ctx: ExecContext, row_size: int, out_size: int) -> int:
    """Rows of output the oblivious budget can buffer, capped at ``out_size``."""
    return min(out_size, ctx.budget.available // row_size)


def small_passes(out_size: int, buffer_rows: int) -> int:
    if out_size == 0:
        return 1
    return math.ceil(out_size / buffer_rows)


def select_small(ctx: ExecContext, source: Source, pred: Pred, out_size: int, buffer_rows: int | None = None) -> ResultTable:
    """Repeated full scans, buffering one enclave-full of matches per pass.

    Every pass reads the whole source; buffered rows are flushed after the
    pass. Exactly ``out_size`` result writes happen in total.
    """
    schema = source.schema
    if buffer_rows is None:
        buffer_rows = small_buffer_rows(ctx, schema.row_size, out_size)
    buffer_rows = min(buffer_rows, out_size)
    if out_size and buffer_rows < 1:
        raise BudgetExceeded("no oblivious memory left for even one buffered row")
    passes = small_passes(out_size, buffer_rows)
    out = new_result(ctx, schema, out_size, init=False)
    total = 0
    with ctx.budget.alloc(buffer_rows * schema.row_size) as buf:
        for p in range(passes):
            start = p * buffer_rows
            stop = min(start + buffer_rows, out_size)
            buf.data = []
            m = 0
            for row in source.rows():
                if row is not None and pred(row):
                    if start <= m < stop:
                        buf.data.append(row)
                    m += 1
            total = m
            for k in range(stop - start):
                out.write(start + k, buf.data[k] if k < len(buf.data) else None)
    if total > out_size:
        raise ResultExceedsPad(f"{total} rows matched, {out_size} declared")
    return ResultTable(out, min(total, out_size), "small")


def select_large(ctx: ExecContext, source: Source, pred: Pred, out_size: int | None = None) -> ResultTable:
    """Copy the table block for block, then clear unselected rows in a second pass."""
    if not source.supports_large:
        raise ValueError("the Large algorithm needs a flat source")
    n = len(source)
    out = new_result(ctx, source.schema, n, init=False)
    for a, row in enumerate(source.rows()):
        out.write(a, row)
    live = 0
    for a in range(n):
        row = out.read(a)
        keep = row is not None and pred(row)
        live += keep
        out.write(a, row if keep else None)
    return ResultTable(out, live, "large")


def select_continuous(ctx: ExecContext, source: Source, pred: Pred, out_size: int) -> ResultTable:
    """One pass writing input ``i`` to slot ``i mod out_size``.

    The first ``out_size`` slots are written blind; after that each write is
    a read-modify-write, since the slot may already hold a selected row.
    """
    if out_size < 1:
        raise ValueError("the Continuous algorithm needs a positive output size")
    out = new_result(ctx, source.schema, out_size, init=False)
    state = 0  # 0 before the run, 1 inside, 2 after
    live = 0
    for i, row in enumerate(source.rows()):
        sel = row is not None and pred(row)
        if sel:
            if state == 2 or live == out_size:
                raise ContinuityViolated(f"selected row at position {i} is outside the single contiguous run")
            state = 1
            live += 1
        elif state == 1:
            state = 2
        pos = i % out_size
        if i < out_size:
            out.write(pos, row if sel else None)
        else:
            old = out.read(pos)
            out.write(pos, row if sel else old)
    return ResultTable(out, live, "continuous")


def select_hash(ctx: ExecContext, source: Source, pred: Pred, out_size: int) -> ResultTable:
    """Double hashing into ``out_size`` buckets of 5 slots.

    Each input row probes both of its buckets, all 5 slots each: 10 slot
    accesses per row, each a read followed by a write, whether or not the
    row is selected.
    """
    if out_size < 1:
        raise ValueError("the Hash algorithm needs a positive output size")
    out = new_result(ctx, source.schema, HASH_DEPTH * out_size, init=True)
    seed = ctx.hash_seed
    live = 0
    for i, row in enumerate(source.rows()):
        sel = row is not None and pred(row)
        pending = sel
        for b in hash_buckets(seed, i, out_size):
            base = b * HASH_DEPTH
            for s in range(HASH_DEPTH):
                old = out.read(base + s)
                if pending and old is None:
                    out.write(base + s, row)
                    pending = False
                else:
                    out.write(base + s, old)
        if pending:
            raise HashOverflow(f"all {2 * HASH_DEPTH} slots for input row {i} are taken")
        live += sel
    return ResultTable(out, live, "hash")


SELECTS = {
    "naive": select_naive,
    "small": select_small,
    "large": select_large,
    "continuous": select_continuous,
    "hash": select_hash,
}
