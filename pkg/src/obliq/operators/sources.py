"""Row sources that operators scan.

A source yields one item per position, ``None`` for dummies. Iterating it
once is one "pass" and produces a trace that depends only on the source's
shape: its capacity for flat tables, its slot count for an ORAM scan, and
the segment length for an index range.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterator

from ..catalog import Table
from ..flat import FlatStore
from ..memory import ObliviousBudget, UntrustedMemory
from ..schema import Row, Schema


@dataclass
class ExecContext:
    """What an operator needs from the engine."""

    memory: UntrustedMemory
    budget: ObliviousBudget
    block_size: int
    rng: random.Random
    hash_seed: int = 0
    join_fanout: int = 1
    enclave_sort_rows: int = 0


class Source:
    schema: Schema
    kind = "source"
    supports_large = False

    def __len__(self) -> int:
        raise NotImplementedError

    def rows(self) -> Iterator[Row | None]:
        raise NotImplementedError

    @property
    def events_per_item(self) -> int:
        raise NotImplementedError


class FlatSource(Source):
    kind = "flat"
    supports_large = True

    def __init__(self, store: FlatStore):
        self.store = store
        self.schema = store.schema

    def __len__(self) -> int:
        return self.store.capacity

    def rows(self) -> Iterator[Row | None]:
        return self.store.scan()

    @property
    def events_per_item(self) -> int:
        return 1


class OramScanSource(Source):
    """Every ORAM slot of an indexed table, in address order."""

    kind = "oram-scan"

    def __init__(self, table: Table):
        self.table = table
        self.schema = table.schema

    def __len__(self) -> int:
        return self.table.index.oram.region.num_blocks

    def rows(self) -> Iterator[Row | None]:
        return self.table.index_rows()

    @property
    def events_per_item(self) -> int:
        return 1


class IndexRangeSource(Source):
    """The rows with ``lo <= key <= hi``, reached through the index.

    A pass costs one descent, one cursor step per row in range, and one more
    step that finds the end. The segment length is part of the leakage.
    """

    kind = "index-range"

    def __init__(self, table: Table, lo: int, hi: int):
        self.table = table
        self.schema = table.schema
        self.lo, self.hi = lo, hi
        self._len: int | None = None

    def __len__(self) -> int:
        if self._len is None:
            # a counting pass; callers normally learn the length from the planner scan
            for _ in self.rows():
                pass
        return self._len

    def rows(self) -> Iterator[Row | None]:
        decode = self.table.schema.decode
        n = 0
        for _, _, data in self.table.index.range(self.lo, self.hi):
            n += 1
            yield decode(data)
        self._len = n

    @property
    def events_per_item(self) -> int:
        return 2 * self.table.index.oram.events_per_access
