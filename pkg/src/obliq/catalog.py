"""Table catalog: each table is flat, indexed, or both."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Iterator

from .bptree import BPlusTree
from .errors import QueryError, TableFull
from .flat import FlatStore
from .memory import ObliviousBudget, UntrustedMemory
from .schema import DATE, INT, Row, Schema

FLAT = "flat"
INDEXED = "indexed"


@dataclass
class Table:
    name: str
    schema: Schema
    capacity: int
    methods: frozenset[str]
    key_column: str | None = None
    flat: FlatStore | None = None
    index: BPlusTree | None = None
    live: int = 0
    # no row has ever been inserted, so a bulk load may lay the table out
    fresh: bool = True

    @property
    def is_flat(self) -> bool:
        return FLAT in self.methods

    @property
    def is_indexed(self) -> bool:
        return INDEXED in self.methods

    @property
    def key_pos(self) -> int:
        return self.schema.index(self.key_column)

    @property
    def storage(self) -> str:
        if self.is_flat and self.is_indexed:
            return "both"
        return "flat" if self.is_flat else "index"

    # -- mutations that keep both representations in step -------------------------

    def insert(self, row: Row, fast: bool = False) -> None:
        if self.live >= self.capacity:
            raise TableFull(f"table {self.name} is full at capacity {self.capacity}")
        if self.flat is not None:
            if fast and self.flat.fast_ok and self.flat.fast_pos < self.capacity:
                self.flat.insert_fast(row)
            else:
                self.flat.insert_scan(row)
        if self.index is not None:
            self.index.insert(row[self.key_pos], self.schema.encode(row))
        self.live += 1
        self.fresh = False

    def bulk_load(self, rows: list[Row]) -> None:
        """Load a fresh, empty table with fixed-shape writes."""
        if not self.fresh or self.live:
            raise ValueError("bulk load needs a fresh empty table")
        if len(rows) > self.capacity:
            raise TableFull(f"{len(rows)} rows exceed capacity {self.capacity} of {self.name}")
        if self.flat is not None:
            for r in rows:
                self.flat.insert_fast(r)
        if self.index is not None:
            kp = self.key_pos
            self.index.bulk_load([(r[kp], self.schema.encode(r)) for r in rows])
        self.live = len(rows)
        self.fresh = False

    def delete_where(self, pred: Callable[[Row], bool], key_range: tuple[int, int] | None = None) -> int:
        """Delete every matching row; returns how many.

        The flat copy is one read-and-rewrite pass. Index matches are found
        by walking ``key_range`` when given, else by an ORAM linear scan;
        then each match costs one padded exact delete. The trace depends on
        the table shape, the range length, and the match count only.
        """
        count = 0
        if self.flat is not None:
            count = self.flat.mutate(lambda r: None if pred(r) else False)
            # whether anything matched must not decide the next insert's path
            self.flat.fast_ok = False
        if self.index is not None:
            hits = self._index_matches(pred, key_range)
            for key, seq, _ in hits:
                self.index.delete_exact(key, seq)
            count = len(hits)
        self.live -= count
        return count

    def update_where(
        self, pred: Callable[[Row], bool], fn: Callable[[Row], Row], key_range: tuple[int, int] | None = None
    ) -> int:
        """Replace each matching row ``r`` by ``fn(r)``; returns how many.

        In the index an update is a padded delete followed by a padded insert,
        since the key may change.
        """
        count = 0
        if self.flat is not None:
            count = self.flat.mutate(lambda r: fn(r) if pred(r) else False)
        if self.index is not None:
            hits = self._index_matches(pred, key_range)
            kp = self.key_pos
            for key, seq, row in hits:
                new = fn(row)
                self.index.delete_exact(key, seq)
                self.index.insert(new[kp], self.schema.encode(new))
            count = len(hits)
        self.fresh = False
        return count

    def _index_matches(self, pred: Callable[[Row], bool], key_range: tuple[int, int] | None) -> list[tuple[int, int, Row]]:
        decode = self.schema.decode
        out = []
        items = self.index.scan_rows() if key_range is None else self.index.range(*key_range)
        for item in items:
            if item is not None:
                row = decode(item[2])
                if pred(row):
                    out.append((item[0], item[1], row))
        return out

    def index_rows(self) -> Iterator[Row | None]:
        """ORAM linear scan of the index, one item per ORAM slot."""
        decode = self.schema.decode
        for item in self.index.scan_rows():
            yield None if item is None else decode(item[2])

    def drop(self) -> None:
        if self.flat is not None:
            self.flat.drop()
        if self.index is not None:
            self.index.close()


class Catalog:
    def __init__(self, memory: UntrustedMemory, budget: ObliviousBudget, rng: random.Random, block_size: int = 512, recursion: bool = False, index_fanout: int | None = None):
        self.memory = memory
        self.budget = budget
        self.rng = rng
        self.block_size = block_size
        self.recursion = recursion
        self.index_fanout = index_fanout
        self.tables: dict[str, Table] = {}

    def __contains__(self, name: str) -> bool:
        return name in self.tables

    def __getitem__(self, name: str) -> Table:
        try:
            return self.tables[name]
        except KeyError:
            raise QueryError(f"unknown table {name!r}") from None

    def create(self, name: str, schema: Schema, methods: set[str] | frozenset[str], capacity: int, key_column: str | None = None) -> Table:
        if name in self.tables:
            raise QueryError(f"table {name!r} already exists")
        if capacity < 1:
            raise QueryError("table capacity must be at least 1")
        methods = frozenset(methods)
        if not methods or not methods <= {FLAT, INDEXED}:
            raise QueryError(f"bad storage methods {set(methods)}")
        if INDEXED in methods:
            if key_column is None:
                raise QueryError("indexed storage needs a key column")
            if schema.column(key_column).type not in (INT, DATE):
                raise QueryError("index key column must be an integer or date column")
        table = Table(name, schema, capacity, methods, key_column)
        if FLAT in methods:
            table.flat = FlatStore(self.memory, schema, capacity, self.block_size, label=f"{name}/flat")
        if INDEXED in methods:
            table.index = BPlusTree(
                self.memory, capacity, schema.row_size, self.block_size, self.budget, self.rng,
                fanout=self.index_fanout, recursion=self.recursion, label=f"{name}/index",
            )
        self.tables[name] = table
        return table

    def drop(self, name: str) -> None:
        self[name].drop()
        del self.tables[name]

    def grow(self, name: str, new_capacity: int) -> Table:
        """Copy ``name`` into a larger table of the same layout, then swap it in."""
        old = self[name]
        if new_capacity < old.capacity:
            raise QueryError("a table can only grow")
        rows = old.flat.rows() if old.flat is not None else [r for r in old.index_rows() if r is not None]
        del self.tables[name]
        try:
            new = self.create(name, old.schema, old.methods, new_capacity, old.key_column)
        except Exception:
            self.tables[name] = old
            raise
        new.bulk_load(rows)
        old.drop()
        return new
