"""Paired workloads: two sessions that agree on every leaked quantity.

Each side runs on a fresh engine with the same cipher seed. If traces are
a function of the leaked quantities alone, the two full-session traces are
equal, which is exactly what a simulator would need. Generators build the
two sides from different data and different predicates while holding the
sizes fixed; :func:`run_paired` re-derives the leaked quantities from both
plan reports and voids the pair if they disagree.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from ..config import EngineConfig
from ..engine import Engine, QueryResult
from ..errors import InvalidWorkload
from .tracediff import Equal, FirstDivergence, canonicalize, oram_layout, trace_diff

T_COLS = "id INT, v INT, g INT, s TEXT(8)"
T_ROW = 1 + 8 + 8 + 8 + 8


@dataclass
class Side:
    setup: list[str]
    rows: dict[str, list[tuple]]
    queries: list[str]


@dataclass
class PairedWorkload:
    name: str
    a: Side
    b: Side
    config: EngineConfig = field(default_factory=lambda: EngineConfig(block_size=128))
    seed: int = 0


@dataclass
class PairedResult:
    verdict: Equal | FirstDivergence
    leakage: tuple
    results_a: list[QueryResult]
    results_b: list[QueryResult]

    @property
    def equal(self) -> bool:
        return isinstance(self.verdict, Equal)


def run_side(side: Side, config: EngineConfig) -> tuple[Engine, list[QueryResult]]:
    eng = Engine(config)
    for stmt in side.setup:
        eng.execute(stmt)
    for name, rows in side.rows.items():
        eng.insert_rows(name, rows)
    return eng, [eng.execute(q) for q in side.queries]


def _leakage(eng: Engine) -> tuple:
    return tuple(
        (r.statement,) + tuple((p.op, p.table, p.algorithm, p.input_size, p.output_size) for p in r.phases)
        for r in eng.reports
    )


def run_paired(w: PairedWorkload, strict: bool = True) -> PairedResult:
    """Run both sides and diff their canonical traces.

    With ``strict`` (the default) a pair whose plan reports disagree raises
    :class:`InvalidWorkload`: the generator broke its own invariant and the
    pair says nothing about obliviousness. Negative controls pass
    ``strict=False``.
    """
    config = w.config.with_(cipher_seed=w.seed)
    ea, ra = run_side(w.a, config)
    eb, rb = run_side(w.b, config)
    la, lb = _leakage(ea), _leakage(eb)
    if strict and la != lb:
        raise InvalidWorkload(f"{w.name}: plan reports differ\n{la}\n{lb}")
    ta = canonicalize(ea.trace(), oram_layout(ea.memory))
    tb = canonicalize(eb.trace(), oram_layout(eb.memory))
    return PairedResult(trace_diff(ta, tb), la, ra, rb)


# -- data helpers ---------------------------------------------------------------------


def _window(rng: random.Random, n: int, r: int, contiguous: bool = False) -> tuple[list[int], str]:
    """Values ``v`` for ``n`` rows and a predicate matching exactly ``r`` of them."""
    if r == 0:
        vals = list(range(n))
        rng.shuffle(vals)
        return vals, rng.choice(["v < 0", f"v >= {n + rng.randrange(5)}", "v = -1"])
    if contiguous:
        start = rng.randrange(n - r + 1)
        pos = list(range(start, start + r))
    else:
        pos = rng.sample(range(n), r)
    k = rng.randrange(n - r + 1)
    inside = list(range(k, k + r))
    outside = [x for x in range(n) if not k <= x < k + r]
    rng.shuffle(inside)
    rng.shuffle(outside)
    vals = [0] * n
    chosen = set(pos)
    it_in, it_out = iter(inside), iter(outside)
    for i in range(n):
        vals[i] = next(it_in) if i in chosen else next(it_out)
    hi = k + r - 1
    pred = rng.choice([
        f"v >= {k} AND v < {k + r}",
        f"v BETWEEN {k} AND {hi}",
        f"NOT (v < {k} OR v > {hi})",
        f"{k} <= v AND v <= {hi}",
    ])
    return vals, pred


def _random_pred(rng: random.Random, n: int) -> str:
    a, b = sorted(rng.randrange(-2, n + 2) for _ in range(2))
    return rng.choice([f"v < {a}", f"v BETWEEN {a} AND {b}", f"g = {rng.randrange(4)} OR v > {b}", "TRUE", f"s = 'x{a % 5}'"])


def _t_rows(rng: random.Random, vals: list[int], groups: list[int] | None = None) -> list[tuple]:
    n = len(vals)
    ids = rng.sample(range(10 * n + 10), n)
    gs = groups if groups is not None else [rng.randrange(4) for _ in range(n)]
    return [(ids[i], vals[i], gs[i], f"x{rng.randrange(5)}") for i in range(n)]


def _create(name: str, cols: str, capacity: int, storage: str = "FLAT") -> str:
    return f"CREATE TABLE {name} ({cols}) WITH STORAGE = {storage}, CAPACITY = {capacity}"


# -- generators -----------------------------------------------------------------------


def gen_select(algo: str | None) -> Callable[[random.Random], PairedWorkload]:
    """Both sides select the same number of rows, by different predicates over different data."""

    def gen(rng: random.Random) -> PairedWorkload:
        n = rng.randrange(8, 65)
        lo = 0 if algo in (None, "small", "large") else 1
        r = rng.randrange(lo, n + 1) if algo != "naive" else rng.randrange(lo, n // 2 + 1)
        contiguous = algo == "continuous" or (algo is None and rng.random() < 0.5)
        planner = EngineConfig(block_size=128).planner
        config = EngineConfig(block_size=128)
        if algo == "small":
            config = config.with_(oblivious_memory_bytes=T_ROW * rng.randrange(1, 9))
        if algo is None:
            config = config.with_(
                oblivious_memory_bytes=T_ROW * rng.randrange(1, 9),
                planner=planner.__class__(continuous_enabled=rng.random() < 0.5),
            )
        hint = f"/*+ {algo.upper()} */ " if algo else ""
        sides = []
        for _ in range(2):
            vals, pred = _window(rng, n, r, contiguous)
            cols = rng.choice(["*", "id, s", "v"])
            sides.append(Side([_create("t", T_COLS, n)], {"t": _t_rows(rng, vals)}, [f"SELECT {hint}{cols} FROM t WHERE {pred}"]))
        return PairedWorkload(f"select_{algo or 'planned'}", sides[0], sides[1], config, rng.randrange(1 << 30))

    return gen


def gen_index_select(rng: random.Random) -> PairedWorkload:
    """Key-range selections over an index; both ranges hold the same number of rows."""
    n = rng.randrange(8, 49)
    r = rng.randrange(0, n + 1)
    storage = rng.choice(["INDEX(id)", "BOTH(id)"])
    agg = rng.random() < 0.3
    sides = []
    for _ in range(2):
        ids = rng.sample(range(4 * n), n)
        rows = [(ids[i], rng.randrange(100), rng.randrange(4), f"x{i % 5}") for i in range(n)]
        srt = sorted(ids)
        if r == 0:
            lo = max(ids) + 1 + rng.randrange(3)
            hi = lo + rng.randrange(3)
        else:
            i = rng.randrange(n - r + 1)
            lo, hi = srt[i], srt[i + r - 1]
        where = rng.choice([f"id BETWEEN {lo} AND {hi}", f"id >= {lo} AND id <= {hi}", f"id >= {lo} AND id < {hi + 1} AND v >= 0"])
        what = "COUNT(*), SUM(v)" if agg else rng.choice(["*", "s, id"])
        sides.append(Side([_create("t", T_COLS, n, storage)], {"t": rows}, [f"SELECT {what} FROM t WHERE {where}"]))
    return PairedWorkload("select_index", sides[0], sides[1], EngineConfig(block_size=128), rng.randrange(1 << 30))


def gen_aggregate(rng: random.Random) -> PairedWorkload:
    """Fused filter and aggregate; nothing but the table size leaks, so predicates are unconstrained."""
    n = rng.randrange(1, 65)
    sides = []
    for _ in range(2):
        vals = [rng.randrange(-50, 50) for _ in range(n)]
        q = f"SELECT COUNT(*), SUM(v), MIN(s), MAX(g), AVG(v) FROM t WHERE {_random_pred(rng, 50)}"
        sides.append(Side([_create("t", T_COLS, n)], {"t": _t_rows(rng, vals)}, [q]))
    return PairedWorkload("aggregate", sides[0], sides[1], EngineConfig(block_size=128), rng.randrange(1 << 30))


def gen_group(rng: random.Random) -> PairedWorkload:
    """Same group count on both sides; match counts and group sizes differ freely."""
    n = rng.randrange(4, 65)
    groups = rng.randrange(1, min(n, 8) + 1)
    sides = []
    for _ in range(2):
        r = rng.randrange(groups, n + 1)
        vals, pred = _window(rng, n, r)
        labels = rng.sample(range(100), groups)
        gs = [rng.randrange(100, 200) for _ in range(n)]
        matched = [i for i in range(n) if pred_match(vals[i], pred)]
        rng.shuffle(matched)
        for j, i in enumerate(matched):
            gs[i] = labels[j] if j < groups else rng.choice(labels)
        q = f"SELECT g, COUNT(*), SUM(v), AVG(v) FROM t WHERE {pred} GROUP BY g"
        sides.append(Side([_create("t", T_COLS, n)], {"t": _t_rows(rng, vals, gs)}, [q]))
    return PairedWorkload("group_aggregate", sides[0], sides[1], EngineConfig(block_size=128), rng.randrange(1 << 30))


def pred_match(v: int, pred: str) -> bool:
    """Evaluate a predicate produced by :func:`_window` for a single ``v``."""
    from ..predicate import compile_pred
    from ..schema import Schema
    from ..sql import parse_sql

    st = parse_sql(f"SELECT * FROM t WHERE {pred}")
    return compile_pred(st.where, Schema.of(("v", "int")))((v,))


P_COLS = "pk INT, a INT, ps TEXT(8)"
F_COLS = "fk INT, b INT"
P_ROW = 1 + 8 + 8 + 8


def gen_join(algo: str) -> Callable[[random.Random], PairedWorkload]:
    """Foreign-key joins of equal-size tables with different matches and filters."""

    def gen(rng: random.Random) -> PairedWorkload:
        n1, n2 = rng.randrange(1, 33), rng.randrange(1, 33)
        if algo == "hash":
            budget = P_ROW * rng.randrange(1, n1 + 1)
        elif algo == "opaque":
            item = 2 + P_ROW
            budget = 2 * item * (1 << rng.randrange(0, 6))
        else:
            budget = 0
        config = EngineConfig(block_size=128, oblivious_memory_bytes=budget)
        hint = {"hash": "/*+ HASH */ ", "opaque": "/*+ OPAQUE */ ", "0om": ""}[algo]
        # the statement's shape is public; only its constants vary between sides
        what = rng.choice(["*", "pk, b", "COUNT(*), SUM(b)"])
        sides = []
        for _ in range(2):
            pks = rng.sample(range(3 * n1 + 3), n1)
            prows = [(k, rng.randrange(100), f"p{k % 7}") for k in pks]
            frows = [(rng.choice(pks) if rng.random() < 0.7 else -1 - rng.randrange(9), rng.randrange(100)) for _ in range(n2)]
            where = rng.choice(["", f" WHERE b < {rng.randrange(100)}", f" WHERE a >= {rng.randrange(100)} OR b = 3"])
            q = f"SELECT {hint}{what} FROM p JOIN f ON pk = fk{where}"
            sides.append(Side([_create("p", P_COLS, n1), _create("f", F_COLS, n2)], {"p": prows, "f": frows}, [q]))
        return PairedWorkload(f"join_{algo}", sides[0], sides[1], config, rng.randrange(1 << 30))

    return gen


def gen_mutate_flat(rng: random.Random) -> PairedWorkload:
    """Flat deletes, updates, and inserts; their match counts never leak."""
    n = rng.randrange(1, 41)
    kinds = [rng.choice(["delete", "update", "insert", "select"]) for _ in range(rng.randrange(1, 5))]
    cap = n + kinds.count("insert") + 1
    sides = []
    for _ in range(2):
        vals = [rng.randrange(60) for _ in range(n)]
        qs = []
        for k in kinds:
            pred = _random_pred(rng, 60)
            if k == "delete":
                qs.append(f"DELETE FROM t WHERE {pred}")
            elif k == "update":
                qs.append(rng.choice([f"UPDATE t SET v = v + {rng.randrange(9)} WHERE {pred}", f"UPDATE t SET s = 'y', g = 1 WHERE {pred}"]))
            elif k == "insert":
                qs.append(f"INSERT INTO t VALUES ({rng.randrange(1000)}, {rng.randrange(60)}, 0, 'z')")
            else:
                qs.append(f"SELECT COUNT(*), MAX(v) FROM t WHERE {pred}")
        sides.append(Side([_create("t", T_COLS, cap)], {"t": _t_rows(rng, vals)}, qs))
    return PairedWorkload("mutate_flat", sides[0], sides[1], EngineConfig(block_size=128), rng.randrange(1 << 30))


def gen_mutate_index(rng: random.Random) -> PairedWorkload:
    """Indexed deletes, updates, and inserts with equal match counts per statement."""
    n = rng.randrange(2, 41)
    storage = rng.choice(["INDEX(id)", "BOTH(id)"])
    plan = []
    live = n
    for _ in range(rng.randrange(1, 5)):
        k = rng.choice(["delete", "update", "rekey", "insert"])
        r = rng.randrange(0, live + 1) if k != "insert" else 1
        plan.append((k, r, rng.randrange(9)))
        live += 1 if k == "insert" else -r if k == "delete" else 0
    cap = n + sum(1 for k, _, _ in plan if k == "insert") + 1
    sides = []
    for _ in range(2):
        ids = rng.sample(range(1000), n)
        rows = [(ids[i], rng.randrange(60), rng.randrange(4), "x") for i in range(n)]
        cur = sorted(ids)
        qs = []
        for k, r, c in plan:
            if k == "insert":
                new = rng.choice([x for x in range(1000, 2000) if x not in cur])
                cur = sorted(cur + [new])
                qs.append(f"INSERT INTO t VALUES ({new}, {c}, 0, 'z')")
                continue
            if r == 0:
                lo = 5000 + rng.randrange(9)
                hi = lo + rng.randrange(3)
                hit = []
            else:
                i = rng.randrange(len(cur) - r + 1)
                hit = cur[i:i + r]
                lo, hi = hit[0], hit[-1]
            where = f"id BETWEEN {lo} AND {hi}"
            if k == "delete":
                qs.append(f"DELETE FROM t WHERE {where}")
                cur = [x for x in cur if x not in hit]
            elif k == "update":
                qs.append(f"UPDATE t SET v = v + {c} WHERE {where}")
            else:
                qs.append(f"UPDATE t SET id = id + 10000 WHERE {where}")
                cur = sorted([x for x in cur if x not in hit] + [x + 10000 for x in hit])
        qs.append("SELECT COUNT(*), SUM(v) FROM t")
        sides.append(Side([_create("t", T_COLS, cap, storage)], {"t": rows}, qs))
    return PairedWorkload("mutate_index", sides[0], sides[1], EngineConfig(block_size=128), rng.randrange(1 << 30))


def gen_padded(rng: random.Random) -> PairedWorkload:
    """Padding mode: any selectivities up to the pad target give one trace."""
    n = rng.randrange(4, 65)
    pad = rng.randrange(1, n + 1)
    group = rng.random() < 0.3
    # grouping keeps its table in oblivious memory, so it gets the default budget
    budget = EngineConfig().oblivious_memory_bytes if group else T_ROW * rng.randrange(1, 9)
    config = EngineConfig(block_size=128, padding_mode=True, pad_target=pad, oblivious_memory_bytes=budget)
    sides = []
    for _ in range(2):
        r = rng.randrange(0, pad + 1)
        vals, pred = _window(rng, n, r, rng.random() < 0.5)
        if group:
            q = f"SELECT g, COUNT(*) FROM t WHERE {pred} GROUP BY g"
            gs = [rng.randrange(max(1, min(pad, 4))) for _ in range(n)]
            sides.append(Side([_create("t", T_COLS, n)], {"t": _t_rows(rng, vals, gs)}, [q]))
        else:
            sides.append(Side([_create("t", T_COLS, n)], {"t": _t_rows(rng, vals)}, [f"SELECT * FROM t WHERE {pred}"]))
    return PairedWorkload("padded", sides[0], sides[1], config, rng.randrange(1 << 30))


SUITES: dict[str, Callable[[random.Random], PairedWorkload]] = {
    "select_naive": gen_select("naive"),
    "select_small": gen_select("small"),
    "select_large": gen_select("large"),
    "select_continuous": gen_select("continuous"),
    "select_hash": gen_select("hash"),
    "select_planned": gen_select(None),
    "select_index": gen_index_select,
    "aggregate": gen_aggregate,
    "group_aggregate": gen_group,
    "join_hash": gen_join("hash"),
    "join_opaque": gen_join("opaque"),
    "join_zero_om": gen_join("0om"),
    "mutate_flat": gen_mutate_flat,
    "mutate_index": gen_mutate_index,
    "padded": gen_padded,
}


@dataclass
class SuiteReport:
    name: str
    equal: int = 0
    diverged: list[tuple[int, FirstDivergence]] = field(default_factory=list)
    invalid: int = 0

    @property
    def ok(self) -> bool:
        return not self.diverged


def run_suite(name: str, count: int, seed: int = 0, max_invalid: int | None = None) -> SuiteReport:
    """Run ``count`` valid pairs; invalid pairs are regenerated, up to ``max_invalid``."""
    gen = SUITES[name]
    rng = random.Random(f"{name}/{seed}")
    rep = SuiteReport(name)
    limit = count if max_invalid is None else max_invalid
    i = 0
    while rep.equal + len(rep.diverged) < count:
        w = gen(rng)
        try:
            res = run_paired(w)
        except InvalidWorkload:
            rep.invalid += 1
            if rep.invalid > limit:
                raise
            continue
        if res.equal:
            rep.equal += 1
        else:
            rep.diverged.append((i, res.verdict))
        i += 1
    return rep
