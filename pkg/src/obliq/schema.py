"""Fixed-length row schemas and their byte encoding.

A row is one in-use flag byte followed by the column fields. Dummy rows are
all zero, so "unused" is visible only after decryption.
"""

from __future__ import annotations

import datetime as _dt
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import QueryError

INT = "int"
TEXT = "text"
DATE = "date"
TYPES = (INT, TEXT, DATE)

_EPOCH = _dt.date(1970, 1, 1)

Row = tuple


def date_to_days(text: str) -> int:
    try:
        return (_dt.date.fromisoformat(text) - _EPOCH).days
    except ValueError:
        raise QueryError(f"bad date literal {text!r}, expected YYYY-MM-DD") from None


def days_to_date(days: int) -> str:
    return (_EPOCH + _dt.timedelta(days=days)).isoformat()


@dataclass(frozen=True)
class Column:
    name: str
    type: str
    width: int = 8  # bytes; only meaningful for TEXT

    def __post_init__(self) -> None:
        if self.type not in TYPES:
            raise QueryError(f"unknown column type {self.type!r}")
        if self.type == TEXT and self.width < 1:
            raise QueryError(f"text column {self.name} needs a positive width")

    @property
    def fmt(self) -> str:
        return f"{self.width}s" if self.type == TEXT else "q"

    def parse(self, text: str) -> int | str:
        """Convert a literal from CSV or SQL into the stored value type."""
        if self.type == TEXT:
            if len(text.encode()) > self.width:
                raise QueryError(f"value {text!r} longer than {self.width} bytes for column {self.name}")
            return text
        if self.type == DATE:
            return date_to_days(text)
        try:
            return int(text)
        except ValueError:
            raise QueryError(f"bad integer {text!r} for column {self.name}") from None

    def check(self, value: object) -> int | str:
        if self.type == TEXT:
            if not isinstance(value, str):
                raise QueryError(f"column {self.name} expects text, got {value!r}")
            if len(value.encode()) > self.width:
                raise QueryError(f"value {value!r} longer than {self.width} bytes for column {self.name}")
            return value
        if self.type == DATE and isinstance(value, str):
            return date_to_days(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise QueryError(f"column {self.name} expects an integer, got {value!r}")
        return value

    def render(self, value: int | str) -> str:
        return days_to_date(value) if self.type == DATE else str(value)


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    _struct: struct.Struct = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.columns:
            raise QueryError("a table needs at least one column")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise QueryError(f"duplicate column names in {names}")
        object.__setattr__(self, "_struct", struct.Struct("<B" + "".join(c.fmt for c in self.columns)))

    def __reduce__(self) -> tuple:
        # struct objects do not pickle; rebuild from the columns
        return (Schema, (self.columns,))

    @classmethod
    def of(cls, *specs: tuple[str, str] | tuple[str, str, int]) -> Schema:
        return cls(tuple(Column(*s) for s in specs))

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def row_size(self) -> int:
        return self._struct.size

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise QueryError(f"unknown column {name!r}")

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]

    def validate(self, values: Sequence[object]) -> Row:
        if len(values) != len(self.columns):
            raise QueryError(f"expected {len(self.columns)} values, got {len(values)}")
        return tuple(c.check(v) for c, v in zip(self.columns, values))

    def encode(self, row: Row | None, size: int | None = None) -> bytes:
        """Serialize ``row`` (``None`` gives a dummy), zero-padded to ``size``."""
        if row is None:
            data = bytes(self.row_size)
        else:
            fields = [v.encode() if isinstance(v, str) else v for v in row]
            data = self._struct.pack(1, *fields)
        if size is not None:
            data += bytes(size - len(data))
        return data

    def decode(self, data: bytes) -> Row | None:
        """Inverse of :meth:`encode`; dummy rows decode to ``None``."""
        vals = self._struct.unpack_from(data)
        if not vals[0]:
            return None
        return tuple(
            v.rstrip(b"\0").decode() if c.type == TEXT else v for c, v in zip(self.columns, vals[1:])
        )

    def concat(self, other: Schema, left_prefix: str = "", right_prefix: str = "") -> Schema:
        """Schema of a joined row; clashing names get their table prefixes."""
        clash = set(self.names) & set(other.names)
        cols = [Column(f"{left_prefix}.{c.name}" if c.name in clash else c.name, c.type, c.width) for c in self.columns]
        cols += [Column(f"{right_prefix}.{c.name}" if c.name in clash else c.name, c.type, c.width) for c in other.columns]
        return Schema(tuple(cols))

    def project(self, names: Iterable[str]) -> Schema:
        return Schema(tuple(self.column(n) for n in names))
