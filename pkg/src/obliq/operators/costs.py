"""Exact untrusted-memory event counts for every operator.

``scan`` is the event count of one pass over the input source (``N`` for a
flat table of capacity ``N``). The planner compares these numbers, and the
tests check them against measured traces, so they must be exact.
"""

from __future__ import annotations

import math

from ..oram import BUCKET_SIZE, tree_levels
from .bitonic import comparator_count, next_pow2
from .select import HASH_DEPTH, small_passes


def oram_access_events(capacity: int) -> int:
    return 2 * (tree_levels(capacity) + 1) * BUCKET_SIZE


def oram_init_events(capacity: int) -> int:
    return ((1 << (tree_levels(capacity) + 1)) - 1) * BUCKET_SIZE


def naive(n: int, r: int, scan: int | None = None) -> int:
    cap = max(r, 1)
    e = oram_access_events(cap)
    return (n if scan is None else scan) + oram_init_events(cap) + n * e + r * (e + 1)


def small(n: int, r: int, buffer_rows: int, scan: int | None = None) -> int:
    return small_passes(r, buffer_rows) * (n if scan is None else scan) + r


def large(n: int, r: int = 0, scan: int | None = None) -> int:
    return (n if scan is None else scan) + 3 * n


def continuous(n: int, r: int, scan: int | None = None) -> int:
    return (n if scan is None else scan) + r + 2 * (n - r)


def hash_select(n: int, r: int, scan: int | None = None) -> int:
    return (n if scan is None else scan) + 4 * HASH_DEPTH * n + HASH_DEPTH * r


def join_hash(n: int, m: int, chunk: int, fanout: int = 1, scan_left: int | None = None, scan_right: int | None = None) -> int:
    k = max(1, math.ceil(n / chunk)) if n else 1
    sl = n if scan_left is None else scan_left
    sr = m if scan_right is None else scan_right
    return sl + k * sr + k * m * fanout


def join_opaque(n: int, m: int, chunk: int, scan_left: int | None = None, scan_right: int | None = None) -> int:
    total = n + m
    size = next_pow2(total)
    chunk = min(chunk, size)
    blocks = size // chunk
    lg = blocks.bit_length() - 1
    sl = n if scan_left is None else scan_left
    sr = m if scan_right is None else scan_right
    return sl + sr + size + 2 * size + size * lg * (lg + 1) + 2 * total


def join_zero_om(n: int, m: int, enclave_rows: int = 0, scan_left: int | None = None, scan_right: int | None = None) -> int:
    total = n + m
    size = next_pow2(total)
    sl = n if scan_left is None else scan_left
    sr = m if scan_right is None else scan_right
    base = sl + sr + size + 2 * total
    if enclave_rows < 2:
        return base + 4 * comparator_count(size)
    sub = 1 << (min(enclave_rows, size).bit_length() - 1)
    events = 2 * size  # first block sorts
    k = 2 * sub
    while k <= size:
        steps = (k // sub).bit_length() - 1
        events += steps * 2 * size + 2 * size
        k *= 2
    return base + events


def aggregate(n: int, scan: int | None = None) -> int:
    return n if scan is None else scan


def group_aggregate(n: int, groups: int, scan: int | None = None) -> int:
    return (n if scan is None else scan) + groups
