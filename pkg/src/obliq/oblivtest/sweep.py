"""Access-count sweeps: measured trace lengths against expected growth.

Each operator runs at several input sizes on a fresh engine. The count is
the number of trace events of the operator's own phases (planning scans
and result delivery are left out). Between consecutive sizes the measured
growth ratio is compared with the ratio of the expected cost function.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

from ..config import EngineConfig
from ..engine import Engine, PlanReport

SKIP_PHASES = ("plan", "plan-join", "output")
TOLERANCE = 1.5
ROW = 1 + 8 + 8  # two INT columns plus the presence byte
SMALL_BUFFER_ROWS = 4
JOIN_BUDGET_ROWS = 8


def _lg(x: float) -> float:
    return math.log2(max(x, 2.0))


@dataclass
class Case:
    expected: Callable[[int], float]
    config: dict
    setup: Callable[[Engine, int], None]
    statement: Callable[[int], str]


def _flat(eng: Engine, n: int, capacity: int | None = None) -> None:
    eng.execute(f"CREATE TABLE t (id INT, v INT) WITH STORAGE = FLAT, CAPACITY = {capacity or n}")
    eng.insert_rows("t", [(i, i) for i in range(n)])


def _grouped(eng: Engine, n: int) -> None:
    eng.execute(f"CREATE TABLE t (id INT, v INT) WITH STORAGE = FLAT, CAPACITY = {n}")
    eng.insert_rows("t", [(i % 4, i) for i in range(n)])


def _indexed(eng: Engine, n: int) -> None:
    eng.execute(f"CREATE TABLE t (id INT, v INT) WITH STORAGE = INDEX(id), CAPACITY = {n + 1}")
    eng.insert_rows("t", [(2 * i, i) for i in range(n)])


def _fast_insert(eng: Engine, n: int) -> None:
    _flat(eng, n, 2 * n)


def _pair(eng: Engine, n: int) -> None:
    eng.execute(f"CREATE TABLE p (pk INT, a INT) WITH STORAGE = FLAT, CAPACITY = {n}")
    eng.execute(f"CREATE TABLE f (fk INT, b INT) WITH STORAGE = FLAT, CAPACITY = {n}")
    eng.insert_rows("p", [(i, i) for i in range(n)])
    eng.insert_rows("f", [(i % n, i) for i in range(n)])


def _select(hint: str, frac: float = 0.5) -> Callable[[int], str]:
    return lambda n: f"SELECT /*+ {hint} */ * FROM t WHERE v < {max(1, int(n * frac))}"


_linear = lambda n: float(n)  # noqa: E731


CASES: dict[str, Case] = {
    "select_naive": Case(lambda n: n * _lg(n), {}, _flat, _select("NAIVE")),
    "select_small": Case(lambda n: float(n) * n, {"oblivious_memory_bytes": SMALL_BUFFER_ROWS * ROW}, _flat, _select("SMALL", 1 / 8)),
    "select_large": Case(_linear, {}, _flat, _select("LARGE", 0.9)),
    "select_continuous": Case(_linear, {}, _flat, _select("CONTINUOUS")),
    "select_hash": Case(_linear, {}, _flat, _select("HASH")),
    "aggregate": Case(_linear, {}, _flat, lambda n: f"SELECT COUNT(*), SUM(v) FROM t WHERE v < {n // 2}"),
    "group_aggregate": Case(_linear, {}, _grouped, lambda n: f"SELECT id, COUNT(*), SUM(v) FROM t WHERE v < {n // 2} GROUP BY id"),
    "join_hash": Case(lambda n: float(n) * n, {"oblivious_memory_bytes": JOIN_BUDGET_ROWS * ROW}, _pair,
                      lambda n: "SELECT /*+ HASH */ * FROM p JOIN f ON pk = fk"),
    "join_opaque": Case(lambda n: 2 * n * _lg(2 * n / JOIN_BUDGET_ROWS) ** 2, {"oblivious_memory_bytes": JOIN_BUDGET_ROWS * (ROW + 2)},
                        _pair, lambda n: "SELECT /*+ OPAQUE */ * FROM p JOIN f ON pk = fk"),
    "join_0om": Case(lambda n: 2 * n * _lg(2 * n) ** 2, {"oblivious_memory_bytes": 0}, _pair,
                     lambda n: "SELECT * FROM p JOIN f ON pk = fk"),
    "index_point": Case(lambda n: _lg(n) ** 2, {"index_fanout": 4}, _indexed, lambda n: f"SELECT * FROM t WHERE id = {n}"),
    "index_insert": Case(lambda n: _lg(n) ** 2, {"index_fanout": 4}, _indexed, lambda n: f"INSERT INTO t VALUES ({n + 1}, 0)"),
    "index_delete": Case(lambda n: _lg(n) ** 2, {"index_fanout": 4}, _indexed, lambda n: f"DELETE FROM t WHERE id = {n}"),
    "index_update": Case(lambda n: _lg(n) ** 2, {"index_fanout": 4}, _indexed, lambda n: f"UPDATE t SET v = 7 WHERE id = {n}"),
    "flat_insert": Case(lambda n: 1.0, {}, _fast_insert, lambda n: f"INSERT INTO t VALUES ({n}, 0)"),
    "flat_update": Case(_linear, {}, _flat, lambda n: f"UPDATE t SET v = 0 WHERE v < {n // 3}"),
    "flat_delete": Case(_linear, {}, _flat, lambda n: f"DELETE FROM t WHERE v < {n // 3}"),
}

DEFAULT_SIZES: dict[str, list[int]] = {
    name: [64, 128, 256, 512] for name in CASES
}
DEFAULT_SIZES.update({
    "select_small": [128, 256, 512, 1024],
    "join_hash": [64, 128, 256, 512],
    "index_point": [64, 1024, 16384],
    "index_insert": [64, 1024, 16384],
    "index_delete": [64, 1024, 16384],
    "index_update": [64, 1024, 16384],
    "flat_insert": [64, 512, 4096],
})


def operator_events(report: PlanReport) -> int:
    return sum(p.events for p in report.phases if p.op not in SKIP_PHASES)


@dataclass
class SweepReport:
    operator: str
    sizes: list[int]
    counts: list[int]
    expected: list[float] = field(default_factory=list)
    tolerance: float = TOLERANCE

    @property
    def ratios(self) -> list[float]:
        """Measured growth over expected growth for each consecutive pair of sizes."""
        out = []
        for i in range(1, len(self.sizes)):
            got = self.counts[i] / max(self.counts[i - 1], 1)
            want = self.expected[i] / self.expected[i - 1]
            out.append(got / want)
        return out

    @property
    def ok(self) -> bool:
        return all(1 / self.tolerance <= r <= self.tolerance for r in self.ratios)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["size", "operator", "access_count"])
        for n, c in zip(self.sizes, self.counts):
            w.writerow([n, self.operator, c])
        return buf.getvalue()


def measure(operator: str, n: int, config: EngineConfig | None = None) -> int:
    case = CASES[operator]
    base = (config or EngineConfig(block_size=128, cipher_seed=0)).with_(**case.config)
    eng = Engine(base)
    case.setup(eng, n)
    res = eng.execute(case.statement(n))
    return operator_events(res.report)


def complexity_sweep(operator: str, sizes: list[int] | None = None, config: EngineConfig | None = None) -> SweepReport:
    if operator not in CASES:
        raise KeyError(f"unknown operator {operator!r}; choose from {sorted(CASES)}")
    sizes = list(sizes or DEFAULT_SIZES[operator])
    counts = [measure(operator, n, config) for n in sizes]
    return SweepReport(operator, sizes, counts, [CASES[operator].expected(n) for n in sizes])
