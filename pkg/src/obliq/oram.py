"""Path ORAM over an untrusted region, one instance per indexed table.

Buckets live in heap order (root 0, children 2b+1 and 2b+2) and each bucket
is ``Z`` consecutive block slots. A slot's plaintext is a flag byte, the
block id, the block's assigned leaf, and the payload. Dummy slots are
flagged in-band, so nothing distinguishes them outside the enclave.

The position map sits in oblivious memory at 8 bytes per block. With
``recursion=True`` it is instead packed into a second, smaller ORAM and only
that ORAM's map is charged to the budget.
"""

from __future__ import annotations

import math
import random
import struct
from array import array
from typing import Callable, Iterator, Mapping

from .memory import HEADER_SIZE, NONCE_SIZE, ObliviousBudget, Region, UntrustedMemory

BUCKET_SIZE = 4

_SLOT_HEADER = struct.Struct("<Bqq")  # flag, block id, leaf
_REAL = 1


def tree_levels(capacity: int) -> int:
    """Levels below the root, ``ceil(log2(capacity))``."""
    return max(0, (capacity - 1).bit_length())


def accesses_events(capacity: int, bucket_size: int = BUCKET_SIZE) -> int:
    """Trace events produced by one access to a nonrecursive ORAM."""
    return 2 * (tree_levels(capacity) + 1) * bucket_size


class PathORAM:
    def __init__(
        self,
        memory: UntrustedMemory,
        capacity: int,
        block_size: int,
        budget: ObliviousBudget,
        rng: random.Random,
        bucket_size: int = BUCKET_SIZE,
        recursion: bool = False,
        label: str = "",
        initial: Mapping[int, bytes] | None = None,
    ):
        if capacity < 1:
            raise ValueError("ORAM capacity must be at least 1")
        self.memory = memory
        self.capacity = capacity
        self.block_size = block_size
        self.rng = rng
        self.Z = bucket_size
        self.L = tree_levels(capacity)
        self.num_leaves = 1 << self.L
        self.num_buckets = (1 << (self.L + 1)) - 1
        self.recursive = recursion
        self.stash: dict[int, tuple[int, bytes]] = {}
        self.max_stash = 0
        self._dummy_slot = _SLOT_HEADER.pack(0, 0, 0) + bytes(block_size)

        # a position map entry is 8 bytes, so one block packs this many
        self.pos_fanout = max(1, block_size // 8)
        self._pos_oram: PathORAM | None = None
        self._pos: array | None = None
        self._initial_leaves: list[int] | None = None
        if recursion:
            inner_capacity = math.ceil(capacity / self.pos_fanout)
            self._pos_oram = PathORAM(memory, inner_capacity, block_size, budget, rng, bucket_size, False, f"{label}/posmap")
            self._posmap_charge = None
        else:
            self._posmap_charge = budget.alloc(8 * capacity)

        self.region: Region = memory.create_region(
            self.num_buckets * self.Z, block_size + _SLOT_HEADER.size, kind="oram", label=label, bucket_size=self.Z
        )
        self.reload(initial or {})

    def reload(self, initial: Mapping[int, bytes]) -> None:
        """Discard all contents and rewrite the tree holding exactly ``initial``.

        Used for bulk loading. Every leaf assignment is fresh and the trace is
        the same fixed write scan as at construction.
        """
        leaves = [self.rng.randrange(self.num_leaves) for _ in range(self.capacity)]
        if self._pos_oram is not None:
            fan = self.pos_fanout
            packed = {}
            for blk in range(self._pos_oram.capacity):
                chunk = leaves[blk * fan:(blk + 1) * fan]
                chunk += [0] * (fan - len(chunk))
                packed[blk] = array("q", chunk).tobytes()
            self._pos_oram.reload(packed)
            self._initial_leaves = leaves
        else:
            self._pos = array("q", leaves)
        self.stash.clear()
        self._initialize(initial)
        self._initial_leaves = None

    def close(self) -> None:
        """Release the position map charge and the tree region."""
        if self._pos_oram is not None:
            self._pos_oram.close()
        if self._posmap_charge is not None:
            self._posmap_charge.release()
            self._posmap_charge = None
        self.memory.drop_region(self.region)

    # -- layout -----------------------------------------------------------

    def path_buckets(self, leaf: int) -> list[int]:
        """Bucket indices from root to ``leaf``."""
        L = self.L
        return [(1 << d) - 1 + (leaf >> (L - d)) for d in range(L + 1)]

    @property
    def posmap_bytes(self) -> int:
        if self._pos_oram is not None:
            return self._pos_oram.posmap_bytes
        return 8 * self.capacity

    @property
    def events_per_access(self) -> int:
        own = 2 * (self.L + 1) * self.Z
        if self._pos_oram is not None:
            own += self._pos_oram.events_per_access
        return own

    # -- position map -------------------------------------------------------

    def _leaf_of(self, block_id: int) -> int:
        if self._initial_leaves is not None:
            return self._initial_leaves[block_id]
        return self._pos[block_id]

    def _remap(self, block_id: int, new_leaf: int) -> int:
        if self._pos_oram is None:
            old = self._pos[block_id]
            self._pos[block_id] = new_leaf
            return old
        blk, off = divmod(block_id, self.pos_fanout)
        seen = []

        def swap_entry(payload: bytes | None) -> bytes:
            entries = array("q")
            entries.frombytes(payload[: 8 * self.pos_fanout])
            seen.append(entries[off])
            entries[off] = new_leaf
            return entries.tobytes() + payload[8 * self.pos_fanout:]

        self._pos_oram.access(blk, update=swap_entry)
        return seen[0]

    # -- initialization -----------------------------------------------------

    def _initialize(self, initial: Mapping[int, bytes]) -> None:
        """Write every slot once, in address order, placing any initial blocks.

        The scan shape depends only on the tree size.
        """
        Z = self.Z
        buckets: list[list[int]] = [[] for _ in range(self.num_buckets)]
        for bid in sorted(initial):
            self._check_id(bid)
            leaf = self._leaf_of(bid)
            for b in reversed(self.path_buckets(leaf)):
                if len(buckets[b]) < Z:
                    buckets[b].append(bid)
                    break
            else:
                self.stash[bid] = (leaf, initial[bid])
        mem, region = self.memory, self.region
        for b in range(self.num_buckets):
            held = buckets[b]
            for j in range(Z):
                if j < len(held):
                    bid = held[j]
                    pt = _SLOT_HEADER.pack(_REAL, bid, self._leaf_of(bid)) + self._pad(initial[bid])
                else:
                    pt = self._dummy_slot
                mem.write(region, b * Z + j, pt)
        self.max_stash = len(self.stash)

    def _pad(self, payload: bytes) -> bytes:
        if len(payload) > self.block_size:
            raise ValueError(f"payload of {len(payload)} bytes exceeds ORAM block size {self.block_size}")
        return payload + bytes(self.block_size - len(payload))

    def _check_id(self, block_id: int) -> None:
        if not 0 <= block_id < self.capacity:
            raise IndexError(f"block id {block_id} outside ORAM of capacity {self.capacity}")

    # -- access -------------------------------------------------------------

    def read(self, block_id: int) -> bytes | None:
        return self.access(block_id)

    def write(self, block_id: int, payload: bytes) -> bytes | None:
        return self.access(block_id, new_payload=payload)

    def access(
        self,
        block_id: int,
        new_payload: bytes | None = None,
        update: Callable[[bytes | None], bytes] | None = None,
    ) -> bytes | None:
        """Read and/or write one block; returns the payload held before.

        Blocks never written read as ``None``. Reads and writes produce the
        same trace: ``L+1`` bucket reads then ``L+1`` bucket writes.
        """
        self._check_id(block_id)
        new_leaf = self.rng.randrange(self.num_leaves)
        leaf = self._remap(block_id, new_leaf)
        buckets = self.path_buckets(leaf)
        mem, region, Z, stash = self.memory, self.region, self.Z, self.stash
        hsize = _SLOT_HEADER.size

        for b in buckets:
            base = b * Z
            for j in range(Z):
                pt, _ = mem.read(region, base + j)
                flag, bid, blk_leaf = _SLOT_HEADER.unpack_from(pt)
                if flag == _REAL:
                    stash[bid] = (blk_leaf, pt[hsize:])

        held = stash.get(block_id)
        old = held[1] if held is not None else None
        if update is not None:
            new = self._pad(update(old))
        elif new_payload is not None:
            new = self._pad(new_payload)
        else:
            new = old
        if new is not None:
            stash[block_id] = (new_leaf, new)

        self._evict(leaf, buckets)
        return old

    def dummy_access(self) -> None:
        """An access indistinguishable from a real one that changes nothing.

        It reads block 0. The ORAM hides which block an access touches, and
        reusing a real access keeps the random-number consumption identical,
        which paired trace tests under a shared seed rely on.
        """
        self.access(0)

    def _evict(self, leaf: int, buckets: list[int]) -> None:
        L, Z, stash = self.L, self.Z, self.stash
        by_depth: list[list[int]] = [[] for _ in range(L + 1)]
        for bid, (blk_leaf, _) in stash.items():
            # deepest level whose bucket lies on both paths
            by_depth[L - (blk_leaf ^ leaf).bit_length()].append(bid)
        placed: list[list[int]] = [[] for _ in range(L + 1)]
        pool: list[int] = []
        for d in range(L, -1, -1):
            if by_depth[d]:
                pool.extend(by_depth[d])
                pool.sort()
            take, pool = pool[:Z], pool[Z:]
            placed[d] = take
        mem, region = self.memory, self.region
        hdr = _SLOT_HEADER
        for d, b in enumerate(buckets):
            base = b * Z
            held = placed[d]
            for j in range(Z):
                if j < len(held):
                    bid = held[j]
                    blk_leaf, data = stash.pop(bid)
                    mem.write(region, base + j, hdr.pack(_REAL, bid, blk_leaf) + data)
                else:
                    mem.write(region, base + j, self._dummy_slot)
        if len(stash) > self.max_stash:
            self.max_stash = len(stash)

    # -- scans --------------------------------------------------------------

    def linear_scan(self, visitor: Callable[[int, bytes], None]) -> None:
        """Read every slot once in address order, then visit stash blocks.

        The trace is ``Z * num_buckets`` reads regardless of occupancy.
        """
        for bid, data in self.scan_blocks():
            if bid is not None:
                visitor(bid, data)

    def scan_blocks(self) -> Iterator[tuple[int | None, bytes | None]]:
        """Yield one item per slot, in address order, with exactly one read each.

        Stash-resident blocks are substituted for dummy slots as the scan
        goes, so the number of items never depends on stash occupancy.
        Dummy items are ``(None, None)``.
        """
        pending = sorted(self.stash.items())
        pending.reverse()
        mem, region = self.memory, self.region
        hsize = _SLOT_HEADER.size
        for addr in range(region.num_blocks):
            pt, _ = mem.read(region, addr)
            flag, bid, _ = _SLOT_HEADER.unpack_from(pt)
            if flag == _REAL:
                yield bid, pt[hsize:]
            elif pending:
                bid, (_, data) = pending.pop()
                yield bid, data
            else:
                yield None, None
        # more stash blocks than dummy slots cannot happen: the tree holds
        # at least 2*capacity slots
        assert not pending

    def contents(self) -> dict[int, bytes]:
        """Untraced enumeration of tree and stash, for tests only.

        Raises if any block id is resident twice.
        """
        seen: dict[int, bytes] = {}
        hsize = _SLOT_HEADER.size
        aead = self.memory._aead
        for blob in self.region._slots:
            pt = aead.decrypt(blob[:NONCE_SIZE], blob[NONCE_SIZE:], None)[HEADER_SIZE:]
            flag, bid, _ = _SLOT_HEADER.unpack_from(pt)
            if flag == _REAL:
                if bid in seen:
                    raise AssertionError(f"block {bid} resident twice")
                seen[bid] = pt[hsize:]
        for bid, (_, data) in self.stash.items():
            if bid in seen:
                raise AssertionError(f"block {bid} in both tree and stash")
            seen[bid] = data
        return seen

    def residency_ok(self) -> bool:
        """Every tree-resident block sits on the path to its assigned leaf."""
        aead = self.memory._aead
        for addr, blob in enumerate(self.region._slots):
            pt = aead.decrypt(blob[:NONCE_SIZE], blob[NONCE_SIZE:], None)[HEADER_SIZE:]
            flag, bid, blk_leaf = _SLOT_HEADER.unpack_from(pt)
            if flag != _REAL:
                continue
            if self._pos is not None and self._pos[bid] != blk_leaf:
                return False
            if addr // self.Z not in self.path_buckets(blk_leaf):
                return False
        return True
