"""A deliberately leaky engine variant, used as a negative control.

The mutant skips the dummy writes that make flat mutations and hash
selection oblivious: untouched blocks are read but never rewritten. A
harness that cannot tell the mutant from the real engine is not testing
anything.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator

from ..errors import HashOverflow
from ..flat import FlatStore
from ..operators import select as ops_select
from ..operators.result import ResultTable, new_result
from ..schema import Row


def _leaky_mutate(self: FlatStore, fn: Callable[[Row], Row | None | bool]) -> int:
    count = 0
    deleted = 0
    for a in range(self.capacity):
        data, _ = self.memory.read(self.region, a, expect_row=a)
        row = self.schema.decode(data)
        out = False if row is None else fn(row)
        if out is False:
            continue  # leak: no rewrite for unchanged rows
        count += 1
        deleted += out is None
        self.memory.write(self.region, a, self._encode(out), row_id=a)
    self.live -= deleted
    if deleted:
        self.fast_ok = False
    return count


def _leaky_hash(ctx, source, pred, out_size: int) -> ResultTable:
    depth = ops_select.HASH_DEPTH
    out = new_result(ctx, source.schema, depth * out_size, init=True)
    live = 0
    for i, row in enumerate(source.rows()):
        if row is None or not pred(row):
            continue  # leak: unselected rows touch nothing
        placed = False
        for b in ops_select.hash_buckets(ctx.hash_seed, i, out_size):
            for s in range(depth):
                if out.read(b * depth + s) is None:
                    out.write(b * depth + s, row)
                    placed = True
                    break
            if placed:
                break
        if not placed:
            raise HashOverflow(f"all slots for input row {i} are taken")
        live += 1
    return ResultTable(out, live, "hash")


@contextmanager
def dummy_write_skipping_mutant() -> Iterator[None]:
    """Patch the engine so that dummy writes are skipped, then restore it."""
    saved_mutate, saved_hash = FlatStore.mutate, ops_select.SELECTS["hash"]
    FlatStore.mutate = _leaky_mutate  # type: ignore[method-assign]
    ops_select.SELECTS["hash"] = _leaky_hash
    try:
        yield
    finally:
        FlatStore.mutate = saved_mutate  # type: ignore[method-assign]
        ops_select.SELECTS["hash"] = saved_hash
