"""A small SQL dialect parsed into logical plan nodes.

Grammar, case-insensitive keywords::

    CREATE TABLE t (col type, ...) [WITH STORAGE = FLAT | INDEX(col) | BOTH(col)] [, CAPACITY = n]
    DROP TABLE t
    INSERT INTO t VALUES (v, ...), (v, ...)
    DELETE FROM t [WHERE pred]
    UPDATE t SET col = lit | col = col (+|-) lit, ... [WHERE pred]
    SELECT [/*+ ALGO */] items FROM t [JOIN u ON a = b] [WHERE pred] [GROUP BY col]

Types are INT, DATE, and TEXT(n). ``items`` is ``*``, column names, or
aggregates COUNT(*), COUNT/SUM/MIN/MAX/AVG(col). Errors carry the
character offset of the offending token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import SqlSyntaxError
from .predicate import FALSE, TRUE, And, Cmp, Const, Not, Or, Pred
from .schema import DATE, INT, TEXT

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<hint>/\*\+.*?\*/)
  | (?P<comment>/\*.*?\*/)
  | (?P<num>\d+)
  | (?P<str>'(?:[^']|'')*')
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?)
  | (?P<op><=|>=|<>|!=|=|<|>)
  | (?P<punct>[(),*;+-])
    """,
    re.VERBOSE | re.DOTALL,
)

_TYPES = {"int": INT, "integer": INT, "bigint": INT, "date": DATE, "text": TEXT, "varchar": TEXT, "char": TEXT}
AGG_FUNCS = ("count", "sum", "min", "max", "avg")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int

    @property
    def upper(self) -> str:
        return self.text.upper()


def tokenize(text: str) -> list[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), pos))
        pos = m.end()
    out.append(Token("eof", "", len(text)))
    return out


# -- plan nodes ---------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnDef:
    name: str
    type: str
    width: int = 8


@dataclass(frozen=True)
class CreateTable:
    name: str
    columns: tuple[ColumnDef, ...]
    storage: str = "flat"  # flat | index | both
    key: str | None = None
    capacity: int | None = None


@dataclass(frozen=True)
class DropTable:
    name: str


@dataclass(frozen=True)
class Insert:
    table: str
    rows: tuple[tuple[int | str, ...], ...]


@dataclass(frozen=True)
class Delete:
    table: str
    where: Pred = TRUE


@dataclass(frozen=True)
class Assign:
    """``column = value`` or ``column = source op value``."""

    column: str
    value: int | str
    source: str | None = None
    op: str | None = None


@dataclass(frozen=True)
class Update:
    table: str
    assignments: tuple[Assign, ...]
    where: Pred = TRUE


@dataclass(frozen=True)
class ColRef:
    name: str


@dataclass(frozen=True)
class Star:
    pass


@dataclass(frozen=True)
class AggCall:
    func: str
    column: str | None = None

    @property
    def label(self) -> str:
        return f"{self.func}({self.column or '*'})"


@dataclass(frozen=True)
class JoinClause:
    table: str
    left: str
    right: str


@dataclass(frozen=True)
class Select:
    items: tuple[ColRef | Star | AggCall, ...]
    table: str
    join: JoinClause | None = None
    where: Pred = TRUE
    group_by: str | None = None
    hints: tuple[str, ...] = field(default=())

    @property
    def aggregates(self) -> list[AggCall]:
        return [i for i in self.items if isinstance(i, AggCall)]


Statement = CreateTable | DropTable | Insert | Delete | Update | Select


# -- parser -------------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None) -> SqlSyntaxError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return SqlSyntaxError(f"{msg}, found {found}", tok.pos)

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def date_literal(self) -> bool:
        return self.at("DATE") and self.toks[self.i + 1].kind == "str"

    def at(self, *words: str) -> bool:
        return self.tok.kind == "name" and self.tok.upper in words

    def accept(self, word: str) -> bool:
        if self.at(word) or (self.tok.kind in ("punct", "op") and self.tok.text == word):
            self.i += 1
            return True
        return False

    def expect(self, word: str) -> Token:
        t = self.tok
        if not self.accept(word):
            raise self.error(f"expected {word}")
        return t

    def name(self, what: str = "a name") -> str:
        if self.tok.kind != "name":
            raise self.error(f"expected {what}")
        return self.advance().text

    def integer(self) -> int:
        neg = self.accept("-")
        if self.tok.kind != "num":
            raise self.error("expected an integer")
        v = int(self.advance().text)
        return -v if neg else v

    def literal(self) -> int | str:
        t = self.tok
        if t.kind == "str":
            self.advance()
            return t.text[1:-1].replace("''", "'")
        if t.kind == "num" or (t.kind == "punct" and t.text == "-"):
            return self.integer()
        if self.date_literal():
            self.advance()
            return self.literal()
        raise self.error("expected a literal")

    # statements

    def statement(self) -> Statement:
        if self.at("CREATE"):
            st = self.create()
        elif self.at("DROP"):
            self.advance()
            self.expect("TABLE")
            st = DropTable(self.name("a table name"))
        elif self.at("INSERT"):
            st = self.insert()
        elif self.at("DELETE"):
            st = self.delete()
        elif self.at("UPDATE"):
            st = self.update()
        elif self.at("SELECT"):
            st = self.select()
        else:
            raise self.error("expected a statement")
        self.accept(";")
        if self.tok.kind != "eof":
            raise self.error("expected end of statement")
        return st

    def create(self) -> CreateTable:
        self.expect("CREATE")
        self.expect("TABLE")
        name = self.name("a table name")
        self.expect("(")
        cols = [self.column_def()]
        while self.accept(","):
            cols.append(self.column_def())
        self.expect(")")
        storage, key, capacity = "flat", None, None
        if self.accept("WITH"):
            while True:
                if self.accept("STORAGE"):
                    self.expect("=")
                    storage, key = self.storage()
                elif self.accept("CAPACITY"):
                    self.expect("=")
                    capacity = self.integer()
                else:
                    raise self.error("expected STORAGE or CAPACITY")
                if not self.accept(","):
                    break
        return CreateTable(name, tuple(cols), storage, key, capacity)

    def column_def(self) -> ColumnDef:
        name = self.name("a column name")
        t = self.tok
        tname = self.name("a column type").lower()
        if tname not in _TYPES:
            raise self.error("expected INT, DATE, or TEXT(n)", t)
        typ = _TYPES[tname]
        width = 8
        if typ == TEXT:
            if self.accept("("):
                width = self.integer()
                self.expect(")")
            else:
                width = 16
        return ColumnDef(name, typ, width)

    def storage(self) -> tuple[str, str | None]:
        t = self.tok
        word = self.name("FLAT, INDEX, or BOTH").upper()
        if word == "FLAT":
            return "flat", None
        if word in ("INDEX", "INDEXED", "BOTH"):
            self.expect("(")
            key = self.name("an index key column")
            self.expect(")")
            return ("both" if word == "BOTH" else "index"), key
        raise self.error("expected FLAT, INDEX, or BOTH", t)

    def insert(self) -> Insert:
        self.expect("INSERT")
        self.expect("INTO")
        table = self.name("a table name")
        self.expect("VALUES")
        rows = [self.tuple_()]
        while self.accept(","):
            rows.append(self.tuple_())
        return Insert(table, tuple(rows))

    def tuple_(self) -> tuple[int | str, ...]:
        self.expect("(")
        vals = [self.literal()]
        while self.accept(","):
            vals.append(self.literal())
        self.expect(")")
        return tuple(vals)

    def where(self) -> Pred:
        return self.pred() if self.accept("WHERE") else TRUE

    def delete(self) -> Delete:
        self.expect("DELETE")
        self.expect("FROM")
        table = self.name("a table name")
        return Delete(table, self.where())

    def update(self) -> Update:
        self.expect("UPDATE")
        table = self.name("a table name")
        self.expect("SET")
        assigns = [self.assign()]
        while self.accept(","):
            assigns.append(self.assign())
        return Update(table, tuple(assigns), self.where())

    def assign(self) -> Assign:
        col = self.name("a column name")
        self.expect("=")
        if self.tok.kind == "name" and not self.date_literal():
            src = self.advance().text
            if self.tok.text not in ("+", "-"):
                raise self.error("expected + or -")
            op = self.advance().text
            return Assign(col, self.integer(), src, op)
        return Assign(col, self.literal())

    def select(self) -> Select:
        self.expect("SELECT")
        hints: list[str] = []
        while self.tok.kind == "hint":
            body = self.advance().text[3:-2]
            hints += [h.lower() for h in re.split(r"[\s,]+", body) if h]
        items = [self.item()]
        while self.accept(","):
            items.append(self.item())
        self.expect("FROM")
        table = self.name("a table name")
        join = None
        if self.at("INNER"):
            self.advance()
            if not self.at("JOIN"):
                raise self.error("expected JOIN")
        if self.accept("JOIN"):
            other = self.name("a table name")
            self.expect("ON")
            a = self.name("a column name")
            self.expect("=")
            b = self.name("a column name")
            join = JoinClause(other, a, b)
        where = self.where()
        group = None
        if self.accept("GROUP"):
            self.expect("BY")
            group = self.name("a column name")
        return Select(tuple(items), table, join, where, group, tuple(hints))

    def item(self) -> ColRef | Star | AggCall:
        if self.accept("*"):
            return Star()
        t = self.tok
        name = self.name("a column or aggregate")
        if self.tok.text == "(" and name.lower() in AGG_FUNCS:
            self.advance()
            func = name.lower()
            if self.accept("*"):
                if func != "count":
                    raise self.error(f"{func.upper()}(*) is not allowed", t)
                col = None
            else:
                col = self.name("a column name")
            self.expect(")")
            return AggCall(func, col)
        return ColRef(name)

    # predicates: OR binds loosest, then AND, then NOT

    def pred(self) -> Pred:
        parts = [self.conj()]
        while self.accept("OR"):
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conj(self) -> Pred:
        parts = [self.neg()]
        while self.accept("AND"):
            parts.append(self.neg())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def neg(self) -> Pred:
        if self.accept("NOT"):
            return Not(self.neg())
        return self.atom()

    def atom(self) -> Pred:
        if self.accept("("):
            p = self.pred()
            self.expect(")")
            return p
        if self.accept("TRUE"):
            return TRUE
        if self.accept("FALSE"):
            return FALSE
        if self.tok.kind == "name" and not self.date_literal():
            col = self.advance().text
            if self.accept("BETWEEN"):
                lo = self.literal()
                self.expect("AND")
                hi = self.literal()
                return And((Cmp(col, ">=", lo), Cmp(col, "<=", hi)))
            op = self.comparison()
            return Cmp(col, op, self.literal())
        lit = self.literal()
        op = self.comparison()
        col = self.name("a column name")
        return Cmp(col, {"<": ">", ">": "<", "<=": ">=", ">=": "<="}.get(op, op), lit)

    def comparison(self) -> str:
        if self.tok.kind != "op":
            raise self.error("expected a comparison operator")
        op = self.advance().text
        return "!=" if op == "<>" else op


def parse_sql(text: str) -> Statement:
    if not text.strip():
        raise SqlSyntaxError("empty statement", 0)
    return _Parser(text).statement()


def split_statements(text: str) -> list[str]:
    """Split a script on semicolons outside string literals and comments."""
    out, start = [], 0
    for m in _TOKEN.finditer(text):
        if m.lastgroup == "punct" and m.group() == ";":
            out.append(text[start : m.start()])
            start = m.end()
    out.append(text[start:])
    return [s for s in (s.strip() for s in out) if s]


__all__ = [
    "AggCall",
    "Assign",
    "ColRef",
    "ColumnDef",
    "Const",
    "CreateTable",
    "Delete",
    "DropTable",
    "Insert",
    "JoinClause",
    "Select",
    "Star",
    "Statement",
    "Update",
    "parse_sql",
    "split_statements",
    "tokenize",
]
