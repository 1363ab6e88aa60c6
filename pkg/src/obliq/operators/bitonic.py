"""Bitonic sorting networks over untrusted regions.

The network used everywhere sorts ascending only: the first step of every
merge stage compares mirrored positions, and the remaining steps are plain
half-cleaners. Its comparison schedule is a pure function of the length.
"""

from __future__ import annotations

from typing import Callable, Iterator

from ..memory import Region, UntrustedMemory

Key = Callable[[bytes], tuple]


def next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def prev_pow2(n: int) -> int:
    return 0 if n < 1 else 1 << (n.bit_length() - 1)


def stage_pairs(n: int, k: int, j: int) -> Iterator[tuple[int, int]]:
    """Comparator pairs ``(lo, hi)`` of one step; the smaller key ends at ``lo``."""
    if j == k // 2:
        for start in range(0, n, k):
            for off in range(j):
                yield start + off, start + k - 1 - off
    else:
        for i in range(n):
            if i & j == 0:
                yield i, i + j


def bitonic_schedule(n: int) -> list[tuple[int, int]]:
    """Every comparator of the ascending network on ``n`` (a power of two) inputs."""
    if n & (n - 1):
        raise ValueError("bitonic networks need a power-of-two length")
    out = []
    k = 2
    while k <= n:
        j = k // 2
        while j >= 1:
            out.extend(stage_pairs(n, k, j))
            j //= 2
        k *= 2
    return out


def comparator_count(n: int) -> int:
    lg = n.bit_length() - 1
    return n // 2 * lg * (lg + 1) // 2


class SortRegion:
    """A region of fixed-size items, sorted in place by a key on the bytes."""

    def __init__(self, memory: UntrustedMemory, length: int, item_size: int, label: str = "sort"):
        self.memory = memory
        self.length = length
        self.item_size = item_size
        self.region: Region = memory.create_region(max(length, 1), item_size, label=label)

    def read(self, a: int) -> bytes:
        return self.memory.read(self.region, a, expect_row=a)[0]

    def write(self, a: int, item: bytes) -> None:
        self.memory.write(self.region, a, item, row_id=a)

    def compare_exchange(self, lo: int, hi: int, key: Key) -> None:
        a, b = self.read(lo), self.read(hi)
        if key(b) < key(a):
            a, b = b, a
        self.write(lo, a)
        self.write(hi, b)

    def sort_block(self, start: int, size: int, key: Key) -> None:
        """Read ``size`` items, sort them in the enclave, write them back."""
        items = [self.read(a) for a in range(start, start + size)]
        items.sort(key=key)
        for off, it in enumerate(items):
            self.write(start + off, it)

    def merge_split(self, lo: int, hi: int, size: int, key: Key) -> None:
        """Block comparator: two sorted blocks in, smaller half to ``lo``."""
        items = [self.read(lo * size + i) for i in range(size)]
        items += [self.read(hi * size + i) for i in range(size)]
        items.sort(key=key)
        for i in range(size):
            self.write(lo * size + i, items[i])
        for i in range(size):
            self.write(hi * size + i, items[size + i])

    def drop(self) -> None:
        self.memory.drop_region(self.region)


def network_sort(sr: SortRegion, key: Key, enclave_rows: int = 0) -> None:
    """Element-level bitonic sort of the whole region.

    With ``enclave_rows >= 2`` every subproblem of that many items (a power
    of two) is finished in the enclave instead: blocks are sorted directly,
    and each later merge stage stops its half-cleaners at block size and
    sorts the blocks. The enclave memory used this way is not oblivious
    memory, so nothing is charged; the trace still depends on sizes only.
    """
    n = sr.length
    sub = prev_pow2(min(enclave_rows, n)) if enclave_rows >= 2 else 1
    if sub > 1:
        for start in range(0, n, sub):
            sr.sort_block(start, sub, key)
    k = 2 * sub
    while k <= n:
        j = k // 2
        while j >= sub and j >= 1:
            for lo, hi in stage_pairs(n, k, j):
                sr.compare_exchange(lo, hi, key)
            j //= 2
        if sub > 1:
            for start in range(0, n, sub):
                sr.sort_block(start, sub, key)
        k *= 2


def block_sort(sr: SortRegion, chunk: int, key: Key) -> None:
    """Sort chunks in the enclave, then run the bitonic network over chunks.

    Each block comparator is a merge-split of two sorted chunks, which keeps
    the network's sorting guarantee.
    """
    n = sr.length
    for start in range(0, n, chunk):
        sr.sort_block(start, chunk, key)
    blocks = n // chunk
    for lo, hi in bitonic_schedule(blocks):
        sr.merge_split(lo, hi, chunk, key)
