"""Flat storage: one row per block, obliviousness by full scans.

The same layout backs base tables and every operator's result table. Block
``a`` always claims row id ``a``, so a shuffled block fails the read check.
"""

from __future__ import annotations

from typing import Callable, Iterator

from .errors import TableFull
from .memory import Region, UntrustedMemory
from .schema import Row, Schema


class FlatStore:
    """A region of ``capacity`` row blocks, every one written at creation."""

    def __init__(self, memory: UntrustedMemory, schema: Schema, capacity: int, block_size: int, label: str = "", init: bool = True):
        if schema.row_size > block_size:
            raise ValueError(f"row of {schema.row_size} bytes does not fit a {block_size}-byte block")
        self.memory = memory
        self.schema = schema
        self.capacity = capacity
        self.block_size = block_size
        # an empty result still gets a (never touched) one-block region
        self.region: Region = memory.create_region(max(capacity, 1), block_size, kind="flat", label=label)
        self.live = 0
        self.fast_pos = 0
        # fast inserts are only safe while slots >= fast_pos are known empty
        self.fast_ok = True
        if init:
            dummy = self._encode(None)
            for a in range(capacity):
                memory.write(self.region, a, dummy, row_id=a)

    def _encode(self, row: Row | None) -> bytes:
        return self.schema.encode(row, self.block_size)

    def __len__(self) -> int:
        return self.capacity

    # -- single-block primitives ------------------------------------------------

    def read(self, address: int) -> Row | None:
        data, _ = self.memory.read(self.region, address, expect_row=address)
        return self.schema.decode(data)

    def write(self, address: int, row: Row | None) -> None:
        self.memory.write(self.region, address, self._encode(row), row_id=address)

    def scan(self) -> Iterator[Row | None]:
        """One read per block in address order; dummies yield ``None``."""
        mem, region, decode = self.memory, self.region, self.schema.decode
        for a in range(self.capacity):
            data, _ = mem.read(region, a, expect_row=a)
            yield decode(data)

    def rows(self) -> list[Row]:
        return [r for r in self.scan() if r is not None]

    # -- mutations ------------------------------------------------------------

    def insert_scan(self, row: Row) -> None:
        """Read and rewrite every block; the first unused one takes ``row``."""
        if self.live >= self.capacity:
            raise TableFull(f"table of capacity {self.capacity} is full")
        placed = False
        mem, region = self.memory, self.region
        for a in range(self.capacity):
            data, _ = mem.read(region, a, expect_row=a)
            if not placed and not data[0]:
                mem.write(region, a, self._encode(row), row_id=a)
                placed = True
            else:
                mem.write(region, a, data, row_id=a)
        self.live += 1
        self.fast_ok = False

    def insert_fast(self, row: Row) -> None:
        """Single write at the saved append position."""
        if self.live >= self.capacity or self.fast_pos >= self.capacity:
            raise TableFull(f"table of capacity {self.capacity} is full")
        if not self.fast_ok:
            raise ValueError("fast insert after scan inserts or deletes would overwrite live rows")
        self.write(self.fast_pos, row)
        self.fast_pos += 1
        self.live += 1

    def mutate(self, fn: Callable[[Row], Row | None | bool]) -> int:
        """Read and rewrite every block, applying ``fn`` to live rows.

        ``fn`` returns ``False`` to leave the row, ``None`` to delete it, or
        a replacement row. Returns the number of rows changed or deleted.
        """
        count = 0
        deleted = 0
        mem, region, decode = self.memory, self.region, self.schema.decode
        for a in range(self.capacity):
            data, _ = mem.read(region, a, expect_row=a)
            row = decode(data)
            out = False if row is None else fn(row)
            if out is False:
                mem.write(region, a, data, row_id=a)
                continue
            count += 1
            if out is None:
                deleted += 1
            mem.write(region, a, self._encode(out), row_id=a)
        self.live -= deleted
        if deleted:
            self.fast_ok = False
        return count

    def drop(self) -> None:
        self.memory.drop_region(self.region)
