"""Random SQL with brute-force answers, for checking the engine end to end.

Every generated statement comes with a plain-Python evaluation over lists
of rows. Nothing here calls engine code, so a shared bug cannot hide.
"""

from __future__ import annotations

import datetime
import random
from collections import Counter, defaultdict
from fractions import Fraction
from typing import Callable

EPOCH = datetime.date(1970, 1, 1).toordinal()
T_NAMES = ("id", "v", "g", "s", "d")
U_NAMES = ("fk", "w")
STRINGS = ("ab", "cd", "ef", "x", "zz")


def days(text: str) -> int:
    return datetime.date.fromisoformat(text).toordinal() - EPOCH


def date_text(n: int) -> str:
    return datetime.date.fromordinal(n + EPOCH).isoformat()


Row = tuple
Fn = Callable[[dict], bool]


class Model:
    """Table contents as Python lists; ``t.id`` stays unique so joins are foreign-key."""

    def __init__(self, rng: random.Random, n_t: int, n_u: int, cap: int, flat: bool = True):
        self.rng = rng
        self.cap = cap
        self.flat = flat
        ids = rng.sample(range(4 * cap), n_t)
        self.t: list[Row] = [self.t_row(i) for i in ids]
        self.u: list[Row] = [(rng.choice(ids) if ids and rng.random() < 0.8 else rng.randrange(-5, 4 * cap), rng.randrange(100)) for _ in range(n_u)]

    def t_row(self, key: int) -> Row:
        r = self.rng
        return (key, r.randrange(-50, 200), r.randrange(5), r.choice(STRINGS), r.randrange(days("1995-01-01"), days("2005-01-01")))

    # -- predicates -----------------------------------------------------------------

    def atom(self, cols: tuple[str, ...]) -> tuple[str, Fn]:
        r = self.rng
        c = r.choice(cols)
        ops = {"=": lambda a, b: a == b, "!=": lambda a, b: a != b, "<": lambda a, b: a < b,
               "<=": lambda a, b: a <= b, ">": lambda a, b: a > b, ">=": lambda a, b: a >= b}
        if c == "s":
            k = r.choice(STRINGS)
            op = r.choice(["=", "!=", "<", ">="])
            return f"s {op} '{k}'", lambda row, op=op, k=k: ops[op](row["s"], k)
        if c == "d":
            k = r.randrange(days("1995-01-01"), days("2005-01-01"))
            op = r.choice(list(ops))
            return f"d {op} DATE '{date_text(k)}'", lambda row, op=op, k=k: ops[op](row["d"], k)
        hi = {"id": 4 * self.cap, "v": 200, "g": 5, "fk": 4 * self.cap, "w": 100}[c]
        k = r.randrange(-2, hi + 2)
        if r.random() < 0.2:
            k2 = k + r.randrange(hi // 4 + 2)
            return f"{c} BETWEEN {k} AND {k2}", lambda row, c=c, k=k, k2=k2: k <= row[c] <= k2
        op = r.choice(list(ops))
        if r.random() < 0.3:
            flipped = {"<": ">", ">": "<", "<=": ">=", ">=": "<=", "=": "=", "!=": "!="}[op]
            return f"{k} {flipped} {c}", lambda row, c=c, op=op, k=k: ops[op](row[c], k)
        text = "<>" if op == "!=" and r.random() < 0.5 else op
        return f"{c} {text} {k}", lambda row, c=c, op=op, k=k: ops[op](row[c], k)

    def pred(self, cols: tuple[str, ...], depth: int = 0) -> tuple[str, Fn]:
        r = self.rng.random()
        if depth >= 2 or r < 0.45:
            return self.atom(cols)
        if r < 0.6:
            s, f = self.pred(cols, depth + 1)
            return f"NOT ({s})", lambda row: not f(row)
        (s1, f1), (s2, f2) = self.pred(cols, depth + 1), self.pred(cols, depth + 1)
        if r < 0.8:
            return f"({s1}) AND ({s2})", lambda row: f1(row) and f2(row)
        return f"({s1}) OR ({s2})", lambda row: f1(row) or f2(row)

    def where(self, cols: tuple[str, ...]) -> tuple[str, Fn]:
        if self.rng.random() < 0.1:
            return "", lambda row: True
        if "id" in cols and self.rng.random() < 0.3:
            # key ranges exercise index paths
            lo = self.rng.randrange(-2, 4 * self.cap)
            hi = lo + self.rng.randrange(0, self.cap // 2 + 2)
            text = self.rng.choice([f"id BETWEEN {lo} AND {hi}", f"id >= {lo} AND id <= {hi}", f"id = {lo}"])
            if text.startswith("id = "):
                return " WHERE " + text, lambda row: row["id"] == lo
            return " WHERE " + text, lambda row: lo <= row["id"] <= hi
        s, f = self.pred(cols)
        return " WHERE " + s, f

    # -- statements -----------------------------------------------------------------

    def t_dicts(self) -> list[dict]:
        return [dict(zip(T_NAMES, r)) for r in self.t]

    def joined(self) -> list[dict]:
        by_id = {r[0]: r for r in self.t}
        out = []
        for fk, w in self.u:
            if fk in by_id:
                out.append({**dict(zip(T_NAMES, by_id[fk])), "fk": fk, "w": w})
        return out

    def aggregate(self, func: str, col: str | None, rows: list[dict]):
        if func == "count":
            return len(rows)
        vals = [r[col] for r in rows]
        if not vals:
            return None
        if func == "sum":
            return sum(vals)
        if func == "min":
            return min(vals)
        if func == "max":
            return max(vals)
        return Fraction(sum(vals), len(vals))

    def agg_items(self, cols: tuple[str, ...]) -> list[tuple[str, str | None]]:
        r = self.rng
        numeric = [c for c in cols if c not in ("s",)]
        out: list[tuple[str, str | None]] = []
        for _ in range(r.randrange(1, 4)):
            f = r.choice(["count", "sum", "min", "max", "avg"])
            if f == "count" and r.random() < 0.5:
                out.append(("count", None))
            elif f in ("min", "max"):
                out.append((f, r.choice(cols)))
            else:
                out.append((f, r.choice(numeric)))
        return out

    @staticmethod
    def agg_sql(items: list[tuple[str, str | None]]) -> str:
        return ", ".join(f"{f.upper()}({c or '*'})" for f, c in items)

    def select(self) -> tuple[str, Callable[[], list[tuple]]]:
        r = self.rng
        kind = r.choice(["rows", "rows", "agg", "group", "join", "join_agg", "join_group"])
        cols = T_NAMES if not kind.startswith("join") else T_NAMES + U_NAMES
        where, f = self.where(cols)
        source = self.t_dicts if not kind.startswith("join") else self.joined
        frm = "t" if not kind.startswith("join") else "t JOIN u ON id = fk"
        hint = ""
        if kind.startswith("join"):
            hint = r.choice(["", "", "/*+ HASH */ ", "/*+ OPAQUE */ ", "/*+ 0OM */ "])
        elif r.random() < 0.2:
            hint = r.choice(["/*+ NAIVE */ ", "/*+ SMALL */ ", "/*+ HASH */ "] + (["/*+ LARGE */ "] if self.flat else []))
        if kind in ("rows", "join"):
            pick = list(cols) if r.random() < 0.3 else r.sample(cols, r.randrange(1, len(cols) + 1))
            what = "*" if pick == list(cols) else ", ".join(pick)
            return f"SELECT {hint}{what} FROM {frm}{where}", lambda: [tuple(d[c] for c in pick) for d in source() if f(d)]
        items = self.agg_items(cols)
        if kind in ("agg", "join_agg"):
            return (
                f"SELECT {hint}{self.agg_sql(items)} FROM {frm}{where}",
                lambda: [tuple(self.aggregate(fn, c, [d for d in source() if f(d)]) for fn, c in items)],
            )
        key = r.choice(["g", "s"] + (["w"] if kind == "join_group" else []))

        def grouped() -> list[tuple]:
            groups: dict = defaultdict(list)
            for d in source():
                if f(d):
                    groups[d[key]].append(d)
            return [(k,) + tuple(self.aggregate(fn, c, g) for fn, c in items) for k, g in groups.items()]

        return f"SELECT {hint}{key}, {self.agg_sql(items)} FROM {frm}{where} GROUP BY {key}", grouped

    def mutate(self) -> tuple[str, Callable[[], int]]:
        r = self.rng
        kind = r.choice(["insert", "insert", "delete", "update"])
        if kind == "insert":
            free = self.cap - len(self.t)
            if free <= 0:
                kind = "delete"
            else:
                taken = {row[0] for row in self.t}
                rows = []
                for _ in range(r.randrange(1, min(free, 3) + 1)):
                    key = r.choice([k for k in range(4 * self.cap) if k not in taken])
                    taken.add(key)
                    rows.append(self.t_row(key))
                vals = ", ".join(f"({a}, {b}, {c}, '{s}', DATE '{date_text(d)}')" for a, b, c, s, d in rows)

                def ins() -> int:
                    self.t.extend(rows)
                    return len(rows)

                return f"INSERT INTO t VALUES {vals}", ins
        where, f = self.where(T_NAMES)
        if kind == "delete":
            def dele() -> int:
                keep = [row for row in self.t if not f(dict(zip(T_NAMES, row)))]
                n = len(self.t) - len(keep)
                self.t = keep
                return n

            return f"DELETE FROM t{where}", dele
        c = r.randrange(-5, 6)
        s = r.choice(STRINGS)
        form = r.randrange(3)
        sets = [f"v = v + {c}", f"s = '{s}'", f"g = {abs(c) % 5}, v = {c}"][form]

        def upd() -> int:
            n = 0
            for i, row in enumerate(self.t):
                if f(dict(zip(T_NAMES, row))):
                    n += 1
                    k, v, g, s0, d = row
                    self.t[i] = [(k, v + c, g, s0, d), (k, v, g, s, d), (k, c, abs(c) % 5, s0, d)][form]
            return n

        return f"UPDATE t SET {sets}{where}", upd


def canon(rows: list[tuple]) -> Counter:
    return Counter(rows)
