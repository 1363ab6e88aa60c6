"""Choosing physical select and join algorithms from leaked sizes only.

A select is planned after one fixed-shape pass over its source that counts
matches and checks whether they form a single run. Every gated candidate is
then priced with the exact event counts in :mod:`obliq.operators.costs` and
the cheapest wins. A join is planned from catalog sizes and the budget
alone and touches no untrusted memory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .operators import costs
from .operators.join import _TAG, hash_chunk_rows, opaque_chunk_rows
from .operators.bitonic import next_pow2
from .operators.select import small_buffer_rows, small_passes
from .operators.sources import ExecContext, Source
from .schema import Row, Schema

Pred = Callable[[Row], bool]

SELECT_ALGORITHMS = ("naive", "small", "large", "continuous", "hash")
JOIN_ALGORITHMS = ("hash", "opaque", "0om")


@dataclass(frozen=True)
class PlannerConfig:
    # Frozen after calibration against the desk-scale benchmark sweep.
    large_threshold: float = 0.8
    small_pass_limit: int = 4
    hash_join_ratio: float = 1.0
    continuous_enabled: bool = False


@dataclass(frozen=True)
class PlannerStats:
    match_count: int
    contiguous: bool
    input_size: int
    scan_events: int


@dataclass(frozen=True)
class SelectChoice:
    algorithm: str
    out_size: int
    buffer_rows: int = 0
    cost: int = 0
    candidates: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class JoinChoice:
    algorithm: str
    chunk_rows: int
    cost: int = 0
    candidates: tuple[tuple[str, int], ...] = ()


def scan_stats(ctx: ExecContext, source: Source, pred: Pred) -> PlannerStats:
    """One pass over ``source``; its trace is that of any other pass.

    Matches are contiguous when they form one run in source order, with no
    wraparound. No matches counts as not contiguous.
    """
    start = ctx.memory.trace.seq
    count = 0
    runs = 0
    prev = False
    n = 0
    for row in source.rows():
        n += 1
        sel = row is not None and pred(row)
        if sel and not prev:
            runs += 1
        count += sel
        prev = sel
    return PlannerStats(count, runs == 1, n, ctx.memory.trace.seq - start)


def select_cost(algorithm: str, stats: PlannerStats, buffer_rows: int) -> int:
    n, r, scan = stats.input_size, stats.match_count, stats.scan_events
    if algorithm == "naive":
        return costs.naive(n, r, scan)
    if algorithm == "small":
        return costs.small(n, r, max(buffer_rows, 1), scan)
    if algorithm == "large":
        return costs.large(n, r, scan)
    if algorithm == "continuous":
        return costs.continuous(n, r, scan)
    if algorithm == "hash":
        return costs.hash_select(n, r, scan)
    raise ValueError(f"unknown select algorithm {algorithm!r}")


def choose_select(stats: PlannerStats, schema: Schema, ctx: ExecContext, config: PlannerConfig, supports_large: bool) -> SelectChoice:
    """Cheapest gated candidate; a pure function of its inputs."""
    n, r = stats.input_size, stats.match_count
    buf = small_buffer_rows(ctx, schema.row_size, r)
    gated = []
    if config.continuous_enabled and stats.contiguous and r > 0:
        gated.append("continuous")
    if supports_large and n and r / n >= config.large_threshold:
        gated.append("large")
    if r == 0 or (buf >= 1 and small_passes(r, buf) <= config.small_pass_limit):
        gated.append("small")
    if r > 0:
        gated.append("hash")
    priced = tuple((a, select_cost(a, stats, buf)) for a in gated)
    algo, cost = min(priced, key=lambda p: p[1])
    return SelectChoice(algo, r, buf, cost, priced)


def plan_select(
    ctx: ExecContext, source: Source, pred: Pred, config: PlannerConfig, hint: str | None = None
) -> tuple[SelectChoice, PlannerStats]:
    stats = scan_stats(ctx, source, pred)
    if hint is not None:
        if hint not in SELECT_ALGORITHMS:
            raise ValueError(f"unknown select algorithm {hint!r}")
        buf = small_buffer_rows(ctx, source.schema.row_size, stats.match_count)
        return SelectChoice(hint, stats.match_count, buf, select_cost(hint, stats, buf)), stats
    return choose_select(stats, source.schema, ctx, config, source.supports_large), stats


def join_costs(ctx: ExecContext, n: int, m: int, left_row: int, right_row: int, fanout: int = 1) -> dict[str, tuple[int, int]]:
    """(chunk rows, exact event count) per join algorithm over flat inputs.

    A chunk of 0 means the algorithm cannot run under the current budget.
    """
    out: dict[str, tuple[int, int]] = {}
    hc = hash_chunk_rows(ctx, n, left_row) if n else 1
    if hc >= 1:
        out["hash"] = (hc, costs.join_hash(n, m, hc, fanout))
    item = _TAG.size + max(left_row, right_row)
    oc = opaque_chunk_rows(ctx, item, next_pow2(n + m))
    if oc >= 1:
        out["opaque"] = (oc, costs.join_opaque(n, m, oc))
    out["0om"] = (0, costs.join_zero_om(n, m, ctx.enclave_sort_rows))
    return out


def plan_join(
    ctx: ExecContext, n: int, m: int, left_row: int, right_row: int, config: PlannerConfig, fanout: int = 1, hint: str | None = None
) -> JoinChoice:
    """Pick from sizes and budget alone. Emits no trace events."""
    options = join_costs(ctx, n, m, left_row, right_row, fanout)
    if hint is not None:
        if hint not in options:
            raise ValueError(f"join algorithm {hint!r} cannot run here")
        chunk, cost = options[hint]
        return JoinChoice(hint, chunk, cost)
    budget_rows = ctx.budget.available // left_row
    if n == 0 or budget_rows / n >= config.hash_join_ratio:
        chunk, cost = options["hash"]
        return JoinChoice("hash", chunk, cost, (("hash", cost),))
    # The no-oblivious-memory join is only for a zero budget.
    cands = {a: v for a, v in options.items() if a != "0om"} or options
    priced = tuple((a, c) for a, (_, c) in cands.items())
    algo, cost = min(priced, key=lambda p: p[1])
    return JoinChoice(algo, cands[algo][0], cost, priced)
