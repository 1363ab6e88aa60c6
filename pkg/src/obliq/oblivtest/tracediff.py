"""Comparing access traces event by event."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..memory import AccessTrace, UntrustedMemory


@dataclass(frozen=True)
class Equal:
    length: int

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class FirstDivergence:
    """The first position where the traces differ, with each side's event there.

    ``seq`` is the sequence number on side ``a``. An event is ``None`` on the
    side whose trace already ended.
    """

    seq: int
    index: int
    a: tuple[int, int, int] | None
    b: tuple[int, int, int] | None

    def __bool__(self) -> bool:
        return False


def oram_layout(memory: UntrustedMemory) -> dict[int, int]:
    """Bucket size of every ORAM region ever created, keyed by region id."""
    return {rid: r.bucket_size for rid, r in memory.all_regions.items() if r.kind == "oram"}


def canonicalize(trace: AccessTrace, layout: dict[int, int]) -> AccessTrace:
    """Replace ORAM slot addresses by (tree level, slot in bucket).

    A Path ORAM access touches one bucket per level; which bucket is the
    freshly random leaf, by design. Two runs that agree on everything else
    may legitimately differ there, so comparisons look at levels only.
    """
    if not layout or not len(trace):
        return trace
    addr = trace.address.copy()
    for rid, z in layout.items():
        mask = trace.region == rid
        if not mask.any():
            continue
        a = addr[mask]
        bucket = a // z
        level = np.floor(np.log2(bucket + 1)).astype(np.int64)
        # guard against float rounding at powers of two
        level -= (1 << level) - 1 > bucket
        level += (1 << (level + 1)) - 1 <= bucket
        addr[mask] = level * z + a % z
    return AccessTrace(trace.region, trace.op, addr, trace.start_seq)


def trace_diff(a: AccessTrace, b: AccessTrace) -> Equal | FirstDivergence:
    """Lexicographic comparison of the (region, op, address) sequences."""
    n = min(len(a), len(b))
    diff = (a.region[:n] != b.region[:n]) | (a.op[:n] != b.op[:n]) | (a.address[:n] != b.address[:n])
    hits = np.flatnonzero(diff)
    if hits.size:
        i = int(hits[0])
    elif len(a) == len(b):
        return Equal(len(a))
    else:
        i = n

    def ev(t: AccessTrace) -> tuple[int, int, int] | None:
        return (int(t.region[i]), int(t.op[i]), int(t.address[i])) if i < len(t) else None

    return FirstDivergence(a.start_seq + i, i, ev(a), ev(b))
