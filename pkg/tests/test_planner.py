from __future__ import annotations

import itertools
import random

import pytest

from obliq.operators import FlatSource, join_hash, join_opaque, join_zero_om, select_large
from obliq.operators.select import SELECTS, small_buffer_rows, small_passes
from obliq.planner import JOIN_ALGORITHMS, PlannerConfig, PlannerStats, choose_select, plan_join, plan_select, scan_stats

from conftest import SCHEMA, Env

ROW = SCHEMA.row_size


def runs(flags):
    return sum(1 for k, _ in itertools.groupby(flags) if k)


@pytest.mark.parametrize("seed", range(20))
def test_scan_stats_counts_and_contiguity(seed):
    rng = random.Random(seed)
    n = rng.randrange(1, 30)
    flags = [rng.random() < 0.5 for _ in range(n)]
    if seed % 3 == 0:  # a single run somewhere
        a, b = sorted(rng.sample(range(n + 1), 2)) if n > 1 else (0, 1)
        flags = [a <= i < b for i in range(n)]
    env = Env()
    t = env.table([(i, int(f), "x") for i, f in enumerate(flags)])
    stats = scan_stats(env.ctx, FlatSource(t.flat), lambda r: r[1] == 1)
    assert stats.match_count == sum(flags)
    assert stats.contiguous == (runs(flags) == 1)
    assert stats.input_size == n
    assert stats.scan_events == n


def test_wraparound_is_not_contiguous():
    env = Env()
    t = env.table([(i, int(i in (0, 1, 5)), "x") for i in range(6)])
    assert not scan_stats(env.ctx, FlatSource(t.flat), lambda r: r[1] == 1).contiguous


def measured(env, algo, source, pred, r, buf):
    start = env.memory.trace.seq
    if algo == "large":
        select_large(env.ctx, source, pred)
    elif algo == "small":
        SELECTS[algo](env.ctx, source, pred, r, buffer_rows=buf)
    else:
        SELECTS[algo](env.ctx, source, pred, r)
    return env.memory.trace.seq - start


@pytest.mark.parametrize("seed", range(24))
def test_choice_is_cheapest_gated_candidate(seed):
    rng = random.Random(seed)
    n = rng.randrange(4, 40)
    r = rng.randrange(0, n + 1)
    contiguous = rng.random() < 0.5
    start = rng.randrange(n - r + 1)
    pos = set(range(start, start + r)) if contiguous else set(rng.sample(range(n), r))
    budget = ROW * rng.choice([1, 2, 5, 64])
    config = PlannerConfig(continuous_enabled=rng.random() < 0.7)
    env = Env(seed, budget=budget)
    t = env.table([(i, int(i in pos), "x") for i in range(n)])
    src = FlatSource(t.flat)
    pred = lambda row: row[1] == 1  # noqa: E731
    choice, stats = plan_select(env.ctx, src, pred, config)

    buf = small_buffer_rows(env.ctx, ROW, r)
    gated = {"hash"} if r else set()
    if r == 0 or (buf >= 1 and small_passes(r, buf) <= config.small_pass_limit):
        gated.add("small")
    if r / n >= config.large_threshold:
        gated.add("large")
    if config.continuous_enabled and r and stats.contiguous:
        gated.add("continuous")
    assert {a for a, _ in choice.candidates} == gated
    costs = {a: measured(env, a, src, pred, r, buf) for a in gated}
    assert costs[choice.algorithm] == min(costs.values())
    # the planner's prices are exact
    assert dict(choice.candidates) == costs


def test_choice_depends_only_on_stats():
    env = Env()
    stats = PlannerStats(match_count=3, contiguous=True, input_size=40, scan_events=40)
    a = choose_select(stats, SCHEMA, env.ctx, PlannerConfig(continuous_enabled=True), True)
    b = choose_select(stats, SCHEMA, env.ctx, PlannerConfig(continuous_enabled=True), True)
    assert a == b


def test_select_hint():
    env = Env()
    t = env.table([(i, i, "x") for i in range(10)])
    choice, _ = plan_select(env.ctx, FlatSource(t.flat), lambda r: r[1] < 3, PlannerConfig(), hint="naive")
    assert (choice.algorithm, choice.out_size) == ("naive", 3)
    with pytest.raises(ValueError):
        plan_select(env.ctx, FlatSource(t.flat), lambda r: True, PlannerConfig(), hint="quick")


def join_events(env, algo, n, m, chunk):
    p = env.table([(i, i, "p") for i in range(n)], name=f"p{algo}")
    f = env.table([(i % max(n, 1), i, "f") for i in range(m)], name=f"f{algo}")
    start = env.memory.trace.seq
    kw = {"chunk_rows": chunk} if algo in ("hash", "opaque") else {}
    fn = {"hash": join_hash, "opaque": join_opaque, "0om": join_zero_om}[algo]
    fn(env.ctx, FlatSource(p.flat), FlatSource(f.flat), "id", "id", lambda r: True, **kw)
    return env.memory.trace.seq - start


def test_plan_join_emits_no_events():
    env = Env(budget=ROW * 3)
    before = env.memory.trace.seq
    for n, m in [(1, 1), (10, 40), (40, 10)]:
        plan_join(env.ctx, n, m, ROW, ROW, PlannerConfig())
    assert env.memory.trace.seq == before


def test_hash_when_primary_table_fits():
    env = Env(budget=ROW * 10)
    assert plan_join(env.ctx, 10, 50, ROW, ROW, PlannerConfig()).algorithm == "hash"
    # past the ratio, hash competes on price with the sort-based join
    over = plan_join(env.ctx, 11, 50, ROW, ROW, PlannerConfig())
    assert {a for a, _ in over.candidates} == {"hash", "opaque"}


def test_zero_budget_uses_0om():
    env = Env(budget=0)
    assert plan_join(env.ctx, 10, 20, ROW, ROW, PlannerConfig()).algorithm == "0om"


@pytest.mark.parametrize("n, m, rows", [(16, 16, 2), (32, 8, 3), (8, 32, 2), (24, 24, 12)])
def test_join_choice_prices_match_measurement(n, m, rows):
    env = Env(budget=ROW * rows)
    choice = plan_join(env.ctx, n, m, ROW, ROW, PlannerConfig())
    for algo, cost in choice.candidates:
        probe = Env(budget=ROW * rows)
        chunk = plan_join(probe.ctx, n, m, ROW, ROW, PlannerConfig(), hint=algo).chunk_rows
        assert join_events(probe, algo, n, m, chunk) == cost
    assert choice.algorithm in JOIN_ALGORITHMS
    assert choice.cost == min(c for _, c in choice.candidates)


def test_join_hint_that_cannot_run():
    env = Env(budget=0)
    with pytest.raises(ValueError):
        plan_join(env.ctx, 10, 10, ROW, ROW, PlannerConfig(), hint="hash")
