"""Acceptance suite: one check per criterion, each printing a pass/fail line.

Absolute timings are not reproduced; criterion 10 checks the orderings of
the workload-mix benchmark instead. A sub-check that cannot be met is kept
as a strict expected failure and shows as FAIL in the summary.
"""

from __future__ import annotations

import bisect
import math
import random
import time

import pytest

from obliq.bptree import BPlusTree
from obliq.config import EngineConfig
from obliq.engine import Engine
from obliq.errors import MacFailure, MisplacedBlock, RollbackDetected, StaleBlock
from obliq.memory import READ, WRITE, Adversary, ObliviousBudget, UntrustedMemory
from obliq.oblivtest import bench_suite, complexity_sweep, dummy_write_skipping_mutant, run_suite
from obliq.oblivtest.paired import PairedWorkload, Side, run_paired
from obliq.oblivtest.sweep import CASES
from obliq.oblivtest.tracediff import Equal, canonicalize, oram_layout, trace_diff
from obliq.operators import FlatSource, join_hash, join_opaque, join_zero_om, select_hash
from obliq.operators.select import HASH_DEPTH, SELECTS
from obliq.oram import BUCKET_SIZE, PathORAM, tree_levels
from obliq.planner import PlannerConfig, plan_join, plan_select
from obliq.sealing import EnclaveState

from conftest import SCHEMA, Env

RESULTS: dict[int, tuple[bool, str]] = {}


def report(capsys, n: int, ok: bool, detail: str) -> None:
    prev = RESULTS.get(n)
    if prev is not None:
        ok, detail = prev[0] and ok, f"{prev[1]}; {detail}"
    RESULTS[n] = (ok, detail)
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")


# -- 1. obliviousness suite ----------------------------------------------------------

OPERATOR_SUITES = [
    "select_naive", "select_small", "select_large", "select_continuous", "select_hash",
    "aggregate", "group_aggregate", "join_hash", "join_opaque", "join_zero_om",
    "mutate_flat", "mutate_index",
]
EXTRA_SUITES = ["select_planned", "select_index", "padded"]


def test_criterion_1_obliviousness(capsys):
    t0 = time.time()
    failures = []
    counts = {}
    for name in OPERATOR_SUITES + EXTRA_SUITES:
        rep = run_suite(name, 100, seed=1)
        counts[name] = rep.equal
        if not rep.ok:
            failures.append((name, rep.diverged[0]))
    # negative control: same data and plan, one more matching row
    a = Side(["CREATE TABLE t (id INT, v INT) WITH CAPACITY = 16"], {"t": [(i, i) for i in range(16)]}, ["SELECT * FROM t WHERE v < 5"])
    b = Side(a.setup, a.rows, ["SELECT * FROM t WHERE v < 6"])
    mismatched = run_paired(PairedWorkload("control", a, b), strict=False)
    with dummy_write_skipping_mutant():
        mutant = {n: len(run_suite(n, 20, seed=2).diverged) for n in ("select_hash", "mutate_flat")}
    elapsed = time.time() - t0
    ok = (
        not failures
        and all(c >= 100 for c in counts.values())
        and not mismatched.equal
        and all(v > 0 for v in mutant.values())
        and elapsed <= 600
    )
    report(
        capsys, 1, ok,
        f"{len(counts)} suites x 100 pairs Equal (failures: {failures or 'none'}); "
        f"mismatched |R| diverges: {not mismatched.equal}; mutant divergences {mutant}; {elapsed:.0f}s",
    )
    assert ok


# -- 2. ORAM against an array ------------------------------------------------------------


def test_criterion_2_oram_oracle(capsys):
    n = 1 << 15
    mem = UntrustedMemory(seed=5)
    oram = PathORAM(mem, n, 16, ObliviousBudget(1 << 30), random.Random(5))
    rng = random.Random(5)
    live = rng.sample(range(n), n // 2)
    oracle: dict[int, bytes] = {}
    for bid in live:
        data = rng.randbytes(16)
        oram.write(bid, data)
        oracle[bid] = data
    expected = 2 * (tree_levels(n) + 1) * BUCKET_SIZE
    lengths = set()
    mismatches = 0
    mem.trace.snapshot()
    for _ in range(100_000):
        bid = rng.choice(live)
        if rng.random() < 0.5:
            data = rng.randbytes(16)
            oram.write(bid, data)
            oracle[bid] = data
        elif oram.read(bid) != oracle[bid]:
            mismatches += 1
        lengths.add(len(mem.trace.snapshot()))
        mem.trace.discard()
    contents_ok = oram.contents() == oracle
    ok = mismatches == 0 and contents_ok and lengths == {expected} and oram.max_stash <= 128
    report(
        capsys, 2, ok,
        f"1e5 ops at 50% load of 2^15: mismatches={mismatches}, final contents equal={contents_ok}, "
        f"per-access events {sorted(lengths)} (want {expected}), max stash {oram.max_stash}",
    )
    assert ok


# -- 3. B+ tree against an ordered map ---------------------------------------------------


def test_criterion_3_bptree_oracle(capsys):
    cap = 512
    mem = UntrustedMemory(seed=9)
    tree = BPlusTree(mem, cap, 8, 128, ObliviousBudget(1 << 30), random.Random(9))
    rng = random.Random(9)
    oracle: list[tuple[int, int]] = []
    values: dict[tuple[int, int], int] = {}
    ins_costs, del_costs = set(), set()
    wrong = 0
    for _ in range(10_000):
        op = rng.random()
        if op < 0.4 and len(oracle) < cap:
            k, v = rng.randrange(300), rng.randrange(1 << 40)
            a = tree.accesses
            seq = tree.insert(k, v.to_bytes(8, "little"))
            ins_costs.add(tree.accesses - a)
            bisect.insort(oracle, (k, seq))
            values[(k, seq)] = v
        elif op < 0.7:
            k = rng.randrange(320)
            a = tree.accesses
            got = tree.delete(k)
            del_costs.add(tree.accesses - a)
            i = bisect.bisect_left(oracle, (k, -(1 << 63)))
            if i < len(oracle) and oracle[i][0] == k:
                del values[oracle.pop(i)]
                wrong += got != 1
            else:
                wrong += got != 0
        else:
            lo = rng.randrange(300)
            hi = lo + (0 if op < 0.85 else rng.randrange(20))
            got = [(k, int.from_bytes(r, "little")) for k, _, r in tree.range(lo, hi)]
            want = [(k, values[(k, s)]) for k, s in oracle if lo <= k <= hi]
            wrong += got != want
    final = tree.check() == oracle
    ok = wrong == 0 and final and len(ins_costs) == 1 and len(del_costs) == 1
    report(
        capsys, 3, ok,
        f"1e4 ops: mismatches={wrong}, final structure equal={final}, "
        f"ORAM accesses per insert {sorted(ins_costs)}, per delete {sorted(del_costs)}",
    )
    assert ok


# -- 4. relational oracle ----------------------------------------------------------------


def test_criterion_4_relational_oracle(capsys):
    from collections import Counter

    from relational_oracle import Model

    total = wrong = 0
    for seed, n, storage in [(11, 100, "FLAT"), (12, 250, "INDEX(id)"), (13, 400, "BOTH(id)"), (14, 700, "FLAT"), (15, 1000, "BOTH(id)")]:
        rng = random.Random(seed)
        cap = n
        m = Model(rng, n - 20, rng.randrange(n), cap, flat=storage == "FLAT")
        e = Engine(EngineConfig(block_size=256, cipher_seed=seed, oblivious_memory_bytes=rng.choice([1 << 17, 1 << 20])))
        e.execute(f"CREATE TABLE t (id INT, v INT, g INT, s TEXT(4), d DATE) WITH STORAGE = {storage}, CAPACITY = {cap}")
        e.execute(f"CREATE TABLE u (fk INT, w INT) WITH CAPACITY = {n}")
        e.insert_rows("t", m.t)
        e.insert_rows("u", m.u)
        for _ in range(100):
            total += 1
            if rng.random() < 0.25:
                sql, apply = m.mutate()
                good = e.execute(sql).count == apply()
                good = good and Counter(e.execute("SELECT * FROM t").rows) == Counter(m.t)
            else:
                sql, answer = m.select()
                good = Counter(e.execute(sql).rows) == Counter(answer())
            wrong += not good
    ok = wrong == 0 and total >= 500
    report(capsys, 4, ok, f"{total} random statements over tables of up to 1000 rows, {wrong} mismatches")
    assert ok


# -- 5. asymptotics ------------------------------------------------------------------------


def test_criterion_5_asymptotics(capsys):
    bad = []
    for op in CASES:
        rep = complexity_sweep(op)
        if not rep.ok:
            bad.append((op, [round(r, 2) for r in rep.ratios]))
    pt = complexity_sweep("index_point")
    steps = list(zip(pt.sizes, pt.counts))
    # superlinear in log N: counts grow faster than log N does
    superlog = all(c2 / c1 > math.log2(n2) / math.log2(n1) for (n1, c1), (n2, c2) in zip(steps, steps[1:]))
    # subpolynomial: the local exponent is small and shrinking
    exps = [math.log(c2 / c1) / math.log(n2 / n1) for (n1, c1), (n2, c2) in zip(steps, steps[1:])]
    subpoly = all(e < 0.3 for e in exps) and all(b < a for a, b in zip(exps, exps[1:]))
    ok = not bad and superlog and subpoly
    report(
        capsys, 5, ok,
        f"{len(CASES)} operator sweeps within 1.5x (outside: {bad or 'none'}); index point read counts "
        f"{pt.counts} at N={pt.sizes}, local exponents {[round(e, 3) for e in exps]}",
    )
    assert ok


# -- 6. hash select constant ---------------------------------------------------------------


def test_criterion_6_hash_select_accesses(capsys):
    env = Env(seed=4)
    rng = random.Random(4)
    seen = set()
    for trial in range(30):
        n = rng.randrange(1, 200)
        rows = [(i, rng.randrange(100), "x") for i in range(n)]
        t = env.table(rows, name=f"h{trial}")
        cut = rng.randrange(1, 101)
        r = max(1, sum(1 for row in rows if row[1] < cut))
        res, tr = env.events(select_hash, env.ctx, FlatSource(t.flat), lambda row: row[1] < cut, r)
        out = res.store.region.id
        init = HASH_DEPTH * r
        # every slot access is one read then one write of the output region
        per_row_reads = tr.count(out, READ) / n
        per_row_writes = (tr.count(out, WRITE) - init) / n
        seen.add((per_row_reads, per_row_writes))
    ok = seen == {(10.0, 10.0)}
    report(capsys, 6, ok, f"output-region slot accesses per input row over 30 runs: {sorted(seen)} (read, write)")
    assert ok


# -- 7. integrity ----------------------------------------------------------------------------


def test_criterion_7_integrity(capsys, tmp_path):
    rng = random.Random(7)
    e = Engine(EngineConfig(block_size=128, cipher_seed=7))
    e.execute("CREATE TABLE t (id INT, v INT) WITH CAPACITY = 32")
    e.insert_rows("t", [(i, i) for i in range(32)])
    region = e.table("t").flat.region
    adv = Adversary(e.memory)
    caught = {"bit flip": 0, "cross-slot copy": 0, "replay": 0}
    for _ in range(100):
        a = rng.randrange(32)
        saved = adv.ciphertext(region, a)
        adv.flip_bit(region, a, rng.randrange(8 * len(saved)))
        try:
            e.execute("SELECT COUNT(*) FROM t")
        except MacFailure:
            caught["bit flip"] += 1
        adv.put(region, a, saved)

        a, b = rng.sample(range(32), 2)
        saved = adv.ciphertext(region, b)
        adv.copy(region, a, region, b)
        try:
            e.execute("SELECT COUNT(*) FROM t")
        except MisplacedBlock:
            caught["cross-slot copy"] += 1
        adv.put(region, b, saved)

        a = rng.randrange(32)
        old = adv.ciphertext(region, a)
        e.execute(f"UPDATE t SET v = v + 1 WHERE id = {rng.randrange(32)}")
        current = adv.ciphertext(region, a)
        adv.put(region, a, old)
        try:
            e.execute("SELECT COUNT(*) FROM t")
        except StaleBlock:
            caught["replay"] += 1
        adv.put(region, a, current)

    state = EnclaveState.new()
    e.seal(tmp_path / "old", state)
    e.seal(tmp_path / "new", state)
    try:
        Engine.open(tmp_path / "old", state)
        rollback = False
    except RollbackDetected:
        rollback = True
    ok = all(v == 100 for v in caught.values()) and rollback
    report(capsys, 7, ok, f"detected per 100 trials {caught}; sealed rollback detected: {rollback}")
    assert ok


# -- 8. planner fidelity -------------------------------------------------------------------

ROW = SCHEMA.row_size
FIG9_ROWS = 2000
# oblivious memory scaled with the table: the 5% result fits, the 95% one does not
FIG9_BUDGET_ROWS = FIG9_ROWS // 20
# the join grid at 1/50 scale: table sizes and budgets in rows
GRID_T1 = (100, 200)
GRID_T2 = (2, 20, 100, 200, 500)
GRID_BUDGETS = (10, 150)
CITED = {(100, 500, 150): "hash", (100, 500, 10): "opaque", (200, 200, 10): "opaque"}


def _select_cell(frac: float, contiguous: bool) -> tuple[str, dict[str, int]]:
    rng = random.Random(int(frac * 100) + contiguous)
    r = int(FIG9_ROWS * frac)
    pos = set(range(300, 300 + r)) if contiguous else set(rng.sample(range(FIG9_ROWS), r))
    if contiguous is False and r:
        # make sure the sample does not form one run by chance
        pos.discard(min(pos))
        pos.add(next(i for i in range(FIG9_ROWS) if i not in pos and i < min(pos) - 1) if min(pos) > 1 else max(pos) + 2)
    env = Env(seed=3, budget=FIG9_BUDGET_ROWS * ROW)
    t = env.table([(i, int(i in pos), "x") for i in range(FIG9_ROWS)])
    src = FlatSource(t.flat)
    pred = lambda row: row[1] == 1  # noqa: E731
    config = PlannerConfig(continuous_enabled=True)
    choice, stats = plan_select(env.ctx, src, pred, config)
    measured = {}
    for algo, _ in choice.candidates:
        start = env.memory.trace.seq
        if algo == "small":
            SELECTS[algo](env.ctx, src, pred, stats.match_count, buffer_rows=choice.buffer_rows)
        elif algo == "large":
            SELECTS[algo](env.ctx, src, pred)
        else:
            SELECTS[algo](env.ctx, src, pred, stats.match_count)
        measured[algo] = env.memory.trace.seq - start
    return choice.algorithm, measured


def _join_cell(n: int, m: int, budget_rows: int) -> tuple[str, dict[str, int]]:
    pick = plan_join(Env(budget=budget_rows * ROW).ctx, n, m, ROW, ROW, PlannerConfig()).algorithm
    measured = {}
    for algo, fn in (("hash", join_hash), ("opaque", join_opaque), ("0om", join_zero_om)):
        env = Env(seed=1, budget=budget_rows * ROW)
        try:
            chunk = plan_join(env.ctx, n, m, ROW, ROW, PlannerConfig(), hint=algo).chunk_rows
        except ValueError:
            continue
        p = env.table([(i, i, "p") for i in range(n)], name="p")
        f = env.table([(i % n, i, "f") for i in range(m)], name="f")
        kw = {"chunk_rows": chunk} if algo != "0om" else {}
        start = env.memory.trace.seq
        fn(env.ctx, FlatSource(p.flat), FlatSource(f.flat), "id", "id", lambda r: True, **kw)
        measured[algo] = env.memory.trace.seq - start
    return pick, measured


def test_criterion_8_planner_fidelity(capsys):
    cells = []
    for frac in (0.05, 0.95):
        for contiguous in (True, False):
            pick, measured = _select_cell(frac, contiguous)
            cells.append((f"{int(frac * 100)}% {'contiguous' if contiguous else 'scattered'}", pick, measured))
    fig9_ok = all(measured[pick] == min(measured.values()) for _, pick, measured in cells)
    grid = []
    for budget in GRID_BUDGETS:
        for n in GRID_T1:
            for m in GRID_T2:
                pick, measured = _join_cell(n, m, budget)
                grid.append(((n, m, budget), pick, measured))
    minimal = sum(measured[pick] == min(measured.values()) for _, pick, measured in grid)
    share = minimal / len(grid)
    ok = fig9_ok and share >= 0.9
    report(
        capsys, 8, ok,
        "select cells " + ", ".join(f"{c}: {p}" for c, p, _ in cells)
        + f" (all access-minimal: {fig9_ok}); join grid access-minimal in {minimal}/{len(grid)} cells",
    )
    assert ok


@pytest.mark.xfail(strict=True, reason="published winners in the 500-row-budget cells are not access-count-minimal")
def test_criterion_8_cited_join_cells(capsys):
    got = {cell: _join_cell(*cell) for cell in CITED}
    agree = {cell: got[cell][0] == want for cell, want in CITED.items()}
    detail = ", ".join(
        f"T1={n} T2={m} budget={b}: picked {got[(n, m, b)][0]}, published {CITED[(n, m, b)]}, measured {got[(n, m, b)][1]}"
        for (n, m, b) in CITED
    )
    report(capsys, 8, all(agree.values()), "cited cells: " + detail)
    assert all(agree.values())


# -- 9. padding mode -------------------------------------------------------------------------


def _padded_side(rows: int, matches: int, pad: int) -> Side:
    values = list(range(rows))
    random.Random(matches).shuffle(values)
    return Side(
        [f"CREATE TABLE t (id INT, v INT) WITH CAPACITY = {rows}"],
        {"t": [(i, values[i]) for i in range(rows)]},
        [f"SELECT * FROM t WHERE v < {matches}", f"SELECT v, COUNT(*) FROM t WHERE v < {matches} GROUP BY v"],
    )


def test_criterion_9_padding(capsys):
    rows = 1000
    padded = EngineConfig(block_size=128, padding_mode=True, pad_target=rows)
    low, high = _padded_side(rows, rows // 100, rows), _padded_side(rows, rows * 99 // 100, rows)
    config = padded.with_(cipher_seed=3)
    ea, eb = Engine(config), Engine(config)
    for eng, s in ((ea, low), (eb, high)):
        for stmt in s.setup:
            eng.execute(stmt)
        eng.insert_rows("t", s.rows["t"])
        for q in s.queries:
            eng.execute(q)
    verdict = trace_diff(canonicalize(ea.trace(), oram_layout(ea.memory)), canonicalize(eb.trace(), oram_layout(eb.memory)))

    # padded against unpadded runs of the same algorithm, planning excluded
    overheads = {}
    for r in (10, 100, 300, 500):
        costs = {}
        for mode, conf, hint in (
            ("plain", EngineConfig(block_size=128, cipher_seed=1), "/*+ SMALL */ "),
            ("padded", EngineConfig(block_size=128, cipher_seed=1, padding_mode=True, pad_target=2 * r), ""),
        ):
            eng = Engine(conf)
            eng.execute(f"CREATE TABLE t (id INT, v INT) WITH CAPACITY = {rows}")
            eng.insert_rows("t", low.rows["t"])
            rep = eng.execute(f"SELECT {hint}* FROM t WHERE v < {r}").report
            costs[mode] = sum(p.events for p in rep.phases if p.op != "plan")
        overheads[r] = costs["padded"] / costs["plain"]
    ok = isinstance(verdict, Equal) and max(overheads.values()) <= 6
    report(
        capsys, 9, ok,
        f"1% vs 99% selectivity padded session traces: {verdict}; access overhead at 2x pad "
        + ", ".join(f"|R|={r}: {o:.2f}x" for r, o in overheads.items()),
    )
    assert ok


# -- 10. workload mixes instead of timings -------------------------------------------------


def test_criterion_10_workload_mix_orderings(capsys):
    rep = bench_suite()
    failed = [name for name, passed in rep.checks if not passed]
    orderings = "; ".join(f"{m}: {' < '.join(rep.ranking(m))}" for m in rep.mix_costs)
    report(capsys, 10, rep.ok, f"{len(rep.checks)} ordering checks, failed: {failed or 'none'}; cheapest first {orderings}")
    assert rep.ok


def test_summary(capsys):
    with capsys.disabled():
        print("\nacceptance summary")
        for n in range(1, 11):
            ok, detail = RESULTS.get(n, (False, "not run"))
            print(f"[{'PASS' if ok else 'FAIL'}] criterion {n}")
