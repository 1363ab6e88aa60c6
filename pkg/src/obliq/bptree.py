"""Oblivious B+ tree stored inside a per-table Path ORAM.

Layout. Every ORAM block is one of three kinds, tagged by an in-band byte:
internal nodes and leaf nodes hold up to ``fanout`` entries of
``(key, seq, pointer)``; row blocks hold one row. Leaf entries point at row
blocks and leaves are chained by a ``next`` pointer. There are no parent
pointers: an operation keeps the root-to-leaf path it descended in enclave
memory and repairs it bottom-up.

Keys are composite ``(key, seq)`` with ``seq`` a per-tree insertion counter,
so duplicate user keys are allowed and stay in insertion order.

In an internal node, entry ``i`` routes every composite key ``k`` with
``key_i <= k < key_{i+1}``; entry 0's key is ignored during descent.

Padding. Every operation performs a constant number of ORAM accesses that
depends only on the tree capacity (through ``H``, the most node levels a
tree of that capacity can ever have). Real accesses are written back lazily,
only when a node changed, and the shortfall is made up with accesses to the
reserved dummy block 0. Since ORAM accesses are indistinguishable, order
does not matter.

With minimum occupancy ``m = fanout // 2`` for non-root nodes and at least
two children at an internal root, a tree of ``D >= 2`` node levels holds at
least ``2 * m**(D-1)`` entries, so ``H`` is the largest ``D`` with
``2 * m**(D-1) <= capacity`` (and 1 if none).

Worst cases, with ``H`` levels:

* locate: ``H`` node reads.
* insert: ``H`` reads, 1 row-block write, 2 writes per split level, and
  1 new root: ``3H + 2``.
* delete of an exact composite key: ``H`` reads, 1 row-block wipe, per
  non-root level one sibling read and two writes, and the root write:
  ``H + 1 + 3(H - 1) + 1 = 4H - 1``.
* cursor step: exactly 2 (a leaf read or dummy, plus a row read or dummy).
"""

from __future__ import annotations

import bisect
import math
import random
import struct
from dataclasses import dataclass, field
from typing import Iterator

from .errors import TableFull
from .memory import ObliviousBudget, UntrustedMemory
from .oram import PathORAM

INTERNAL = 1
LEAF = 2
ROW = 3

KEY_MIN = -(1 << 63)

_NODE_HEAD = struct.Struct("<BHq")  # kind, entry count, next leaf
_ENTRY = struct.Struct("<qqq")  # key, seq, pointer
_ROW_HEAD = struct.Struct("<Bqq")  # kind, key, seq

DUMMY_BLOCK = 0


def fanout_for(block_size: int) -> int:
    """Largest entry count whose node fits in one block."""
    return (block_size - _NODE_HEAD.size) // _ENTRY.size


def max_levels(capacity: int, fanout: int) -> int:
    m = fanout // 2
    levels = 1
    while 2 * m ** levels <= capacity:
        levels += 1
    return levels


def node_blocks(capacity: int, fanout: int) -> int:
    """ORAM capacity needed: rows, a bound on nodes, the dummy, and slack."""
    m = fanout // 2
    return capacity + 2 * math.ceil(capacity / m) + max_levels(capacity, fanout) + 4


@dataclass
class Node:
    kind: int
    entries: list[list[int]] = field(default_factory=list)  # [key, seq, ptr]
    next: int = 0

    def keys(self) -> list[tuple[int, int]]:
        return [(e[0], e[1]) for e in self.entries]


class Cursor:
    """Forward iterator over leaf entries in composite-key order.

    Each :meth:`step` costs exactly two ORAM accesses.
    """

    def __init__(self, tree: BPlusTree, leaf: Node, index: int):
        self.tree = tree
        self.leaf = leaf
        self.index = index

    def step(self) -> tuple[int, int, bytes] | None:
        """Next ``(key, seq, row_bytes)``, or ``None`` past the end."""
        tree = self.tree
        if self.index >= len(self.leaf.entries) and self.leaf.next != DUMMY_BLOCK:
            self.leaf = tree._read_node(self.leaf.next)
            self.index = 0
        else:
            tree._dummy()
        if self.index < len(self.leaf.entries):
            key, seq, ptr = self.leaf.entries[self.index]
            self.index += 1
            payload = tree._access(ptr)
            return key, seq, payload[_ROW_HEAD.size:_ROW_HEAD.size + tree.row_size]
        tree._dummy()
        return None


class BPlusTree:
    def __init__(
        self,
        memory: UntrustedMemory,
        capacity: int,
        row_size: int,
        block_size: int,
        budget: ObliviousBudget,
        rng: random.Random,
        fanout: int | None = None,
        recursion: bool = False,
        label: str = "",
    ):
        self.capacity = capacity
        self.row_size = row_size
        self.fanout = fanout if fanout is not None else fanout_for(block_size)
        if self.fanout < 4:
            raise ValueError(f"B+ tree fanout {self.fanout} is below 4; use a larger block size")
        if self.fanout > fanout_for(block_size):
            raise ValueError(f"fanout {self.fanout} does not fit a {block_size}-byte block")
        if _ROW_HEAD.size + row_size > block_size:
            raise ValueError(f"row of {row_size} bytes does not fit a {block_size}-byte index block")
        self.min_fill = self.fanout // 2
        self.H = max_levels(capacity, self.fanout)
        self.block_size = block_size
        self.oram = PathORAM(memory, node_blocks(capacity, self.fanout), block_size, budget, rng, recursion=recursion, label=label)
        self.accesses = 0
        self.live = 0
        self._seq = 0
        self._reset_free()
        self.root = self._alloc()
        self._write_node(self.root, Node(LEAF))

    # -- worst-case constants ---------------------------------------------------

    @property
    def locate_cost(self) -> int:
        return self.H

    @property
    def insert_cost(self) -> int:
        return 3 * self.H + 2

    @property
    def delete_exact_cost(self) -> int:
        return 4 * self.H - 1

    @property
    def delete_cost(self) -> int:
        return self.locate_cost + 2 + self.delete_exact_cost

    # -- block plumbing -----------------------------------------------------------

    def _reset_free(self) -> None:
        # block 0 is the dummy target; hand out low ids first
        self._free = list(range(self.oram.capacity - 1, DUMMY_BLOCK, -1))

    def _alloc(self) -> int:
        return self._free.pop()

    def _release(self, block_id: int) -> None:
        self._free.append(block_id)

    def _access(self, block_id: int, payload: bytes | None = None) -> bytes | None:
        self.accesses += 1
        return self.oram.access(block_id, new_payload=payload)

    def _dummy(self) -> None:
        self.accesses += 1
        self.oram.access(DUMMY_BLOCK)

    def _pad(self, start: int, target: int) -> None:
        used = self.accesses - start
        if used > target:
            raise AssertionError(f"operation used {used} ORAM accesses, worst case is {target}")
        for _ in range(target - used):
            self._dummy()

    @staticmethod
    def _encode_node(node: Node) -> bytes:
        out = [_NODE_HEAD.pack(node.kind, len(node.entries), node.next)]
        out.extend(_ENTRY.pack(*e) for e in node.entries)
        return b"".join(out)

    @staticmethod
    def _decode_node(data: bytes) -> Node:
        kind, n, nxt = _NODE_HEAD.unpack_from(data)
        entries = [list(_ENTRY.unpack_from(data, _NODE_HEAD.size + i * _ENTRY.size)) for i in range(n)]
        return Node(kind, entries, nxt)

    def _read_node(self, block_id: int) -> Node:
        return self._decode_node(self._access(block_id))

    def _write_node(self, block_id: int, node: Node) -> None:
        self._access(block_id, self._encode_node(node))

    # -- descent ------------------------------------------------------------------

    def _descend(self, target: tuple[int, int]) -> list[tuple[int, Node, int]]:
        """Root-to-leaf path as ``(block, node, child index taken)``; ``H`` accesses."""
        path = []
        bid = self.root
        while True:
            node = self._read_node(bid)
            if node.kind == LEAF:
                path.append((bid, node, -1))
                break
            keys = node.keys()
            i = max(0, bisect.bisect_right(keys, target, 1) - 1)
            path.append((bid, node, i))
            bid = node.entries[i][2]
        for _ in range(self.H - len(path)):
            self._dummy()
        return path

    def locate(self, key: int, seq: int = KEY_MIN) -> Cursor:
        """Cursor at the first entry ``>= (key, seq)``; ``H`` accesses."""
        path = self._descend((key, seq))
        leaf = path[-1][1]
        return Cursor(self, leaf, bisect.bisect_left(leaf.keys(), (key, seq)))

    def first(self) -> Cursor:
        return self.locate(KEY_MIN)

    # -- insert -------------------------------------------------------------------

    def insert(self, key: int, row: bytes) -> int:
        """Insert a row under ``key``; returns its sequence number."""
        if self.live >= self.capacity:
            raise TableFull(f"index of capacity {self.capacity} is full")
        start = self.accesses
        seq = self._seq
        self._seq += 1
        path = self._descend((key, seq))

        row_block = self._alloc()
        self._access(row_block, _ROW_HEAD.pack(ROW, key, seq) + row)

        leaf = path[-1][1]
        carry = [key, seq, row_block]
        pos = bisect.bisect_left(leaf.keys(), (key, seq))
        level = len(path) - 1
        while True:
            bid, node, _ = path[level]
            node.entries.insert(pos, carry)
            if len(node.entries) <= self.fanout:
                self._write_node(bid, node)
                break
            half = len(node.entries) // 2
            right = Node(node.kind, node.entries[half:])
            node.entries = node.entries[:half]
            rid = self._alloc()
            if node.kind == LEAF:
                right.next = node.next
                node.next = rid
            self._write_node(bid, node)
            self._write_node(rid, right)
            carry = [right.entries[0][0], right.entries[0][1], rid]
            if level == 0:
                new_root = self._alloc()
                self._write_node(new_root, Node(INTERNAL, [[KEY_MIN, KEY_MIN, bid], carry]))
                self.root = new_root
                break
            level -= 1
            pos = path[level][2] + 1
        self.live += 1
        self._pad(start, self.insert_cost)
        return seq

    # -- delete -------------------------------------------------------------------

    def delete_exact(self, key: int, seq: int) -> bool:
        """Remove the entry ``(key, seq)`` if present; padded to ``4H - 1``."""
        start = self.accesses
        found = self._delete_exact(key, seq)
        self._pad(start, self.delete_exact_cost)
        return found

    def delete(self, key: int) -> int:
        """Remove one row stored under ``key``; returns 1 or 0."""
        start = self.accesses
        hit = self.locate(key).step()
        if hit is not None and hit[0] == key:
            self.delete_exact(key, hit[1])
            found = 1
        else:
            found = 0
        self._pad(start, self.delete_cost)
        return found

    def _delete_exact(self, key: int, seq: int) -> bool:
        path = self._descend((key, seq))
        leaf = path[-1][1]
        keys = leaf.keys()
        pos = bisect.bisect_left(keys, (key, seq))
        if pos >= len(keys) or keys[pos] != (key, seq):
            return False
        row_block = leaf.entries.pop(pos)[2]
        self._access(row_block, bytes(1))  # wipe the row block
        self._release(row_block)
        self.live -= 1

        level = len(path) - 1
        while level > 0:
            bid, node, _ = path[level]
            if len(node.entries) >= self.min_fill:
                self._write_node(bid, node)
                return True
            pbid, parent, ci = path[level - 1]
            if ci + 1 < len(parent.entries):
                sib_i, left_i = ci + 1, ci
            else:
                sib_i, left_i = ci - 1, ci - 1
            sib_bid = parent.entries[sib_i][2]
            sib = self._read_node(sib_bid)
            if len(sib.entries) > self.min_fill:
                self._borrow(parent, ci, node, sib_i, sib)
                self._write_node(bid, node)
                self._write_node(sib_bid, sib)
            else:
                left_bid = parent.entries[left_i][2]
                right_i = left_i + 1
                left, right = (node, sib) if left_i == ci else (sib, node)
                if left.kind == INTERNAL:
                    right.entries[0][0:2] = parent.entries[right_i][0:2]
                left.entries.extend(right.entries)
                left.next = right.next
                self._release(parent.entries[right_i][2])
                del parent.entries[right_i]
                self._write_node(left_bid, left)
            level -= 1

        rbid, root, _ = path[0]
        if root.kind == INTERNAL and len(root.entries) == 1:
            # the tree shrinks one level; the old root block is just freed
            self.root = root.entries[0][2]
            self._release(rbid)
        else:
            self._write_node(rbid, root)
        return True

    @staticmethod
    def _borrow(parent: Node, ci: int, node: Node, sib_i: int, sib: Node) -> None:
        internal = node.kind == INTERNAL
        if sib_i > ci:
            moved = sib.entries.pop(0)
            if internal:
                moved[0:2] = parent.entries[sib_i][0:2]
            node.entries.append(moved)
            parent.entries[sib_i][0:2] = sib.entries[0][0:2]
        else:
            moved = sib.entries.pop()
            if internal:
                node.entries[0][0:2] = parent.entries[ci][0:2]
            node.entries.insert(0, moved)
            parent.entries[ci][0:2] = moved[0:2]

    # -- bulk load ------------------------------------------------------------------

    def bulk_load(self, items: list[tuple[int, bytes]]) -> list[int]:
        """Replace the whole tree with ``items`` (key, row) in one fixed scan.

        Leaves are packed full, so the tree is as shallow as it can be.
        Returns the sequence numbers assigned, in input order.
        """
        if len(items) > self.capacity:
            raise TableFull(f"{len(items)} rows exceed index capacity {self.capacity}")
        self._reset_free()
        order = sorted(range(len(items)), key=lambda i: items[i][0])
        seqs = [0] * len(items)
        blocks: dict[int, bytes] = {}
        entries = []
        for i in order:
            key, row = items[i]
            seq = self._seq
            self._seq += 1
            seqs[i] = seq
            rb = self._alloc()
            blocks[rb] = _ROW_HEAD.pack(ROW, key, seq) + row
            entries.append([key, seq, rb])

        kind = LEAF
        level_nodes = [(self._alloc(), Node(LEAF, chunk)) for chunk in self._chunks(entries)]
        for (bid, node), (nbid, _) in zip(level_nodes, level_nodes[1:]):
            node.next = nbid
        while True:
            for bid, node in level_nodes:
                blocks[bid] = self._encode_node(node)
            if len(level_nodes) == 1:
                break
            kind = INTERNAL
            ups = [[n.entries[0][0], n.entries[0][1], bid] for bid, n in level_nodes]
            ups[0][0:2] = [KEY_MIN, KEY_MIN]
            level_nodes = [(self._alloc(), Node(kind, chunk)) for chunk in self._chunks(ups)]
        self.root = level_nodes[0][0]
        self.oram.reload(blocks)
        self.live = len(items)
        return seqs

    def _chunks(self, entries: list[list[int]]) -> list[list[list[int]]]:
        if not entries:
            return [[]]
        n = math.ceil(len(entries) / self.fanout)
        if n == 1:
            return [entries]
        # even split keeps every node at or above the minimum fill
        size, extra = divmod(len(entries), n)
        out, at = [], 0
        for k in range(n):
            step = size + (1 if k < extra else 0)
            out.append(entries[at:at + step])
            at += step
        return out

    # -- reads ----------------------------------------------------------------------

    def range(self, lo: int, hi: int) -> Iterator[tuple[int, int, bytes]]:
        """Entries with ``lo <= key <= hi``; one extra step detects the end."""
        cur = self.locate(lo)
        while True:
            hit = cur.step()
            if hit is None or hit[0] > hi:
                return
            yield hit

    def scan_rows(self) -> Iterator[tuple[int, int, bytes] | None]:
        """ORAM linear scan: one item per slot, row blocks decoded, others ``None``."""
        hs = _ROW_HEAD.size
        for bid, data in self.oram.scan_blocks():
            if bid is not None and data[0] == ROW:
                _, key, seq = _ROW_HEAD.unpack_from(data)
                yield key, seq, data[hs:hs + self.row_size]
            else:
                yield None

    # -- test support -------------------------------------------------------------

    def check(self) -> list[tuple[int, int]]:
        """Untraced structural check; returns all composite keys in leaf order."""
        blocks = self.oram.contents()

        def node(bid: int) -> Node:
            return self._decode_node(blocks[bid])

        out: list[tuple[int, int]] = []
        depths = set()

        def walk(bid: int, lo, hi, depth: int, is_root: bool) -> None:
            n = node(bid)
            if not is_root:
                assert len(n.entries) >= self.min_fill, f"underfull node {bid}"
            assert len(n.entries) <= self.fanout
            if n.kind == LEAF:
                depths.add(depth)
                for k, s, _ in n.entries:
                    assert lo <= (k, s) and (hi is None or (k, s) < hi)
                    out.append((k, s))
                return
            assert not is_root or len(n.entries) >= 2
            for i, (k, s, child) in enumerate(n.entries):
                clo = lo if i == 0 else (k, s)
                chi = hi if i + 1 == len(n.entries) else tuple(n.entries[i + 1][:2])
                walk(child, clo, chi, depth + 1, False)

        walk(self.root, (KEY_MIN, KEY_MIN), None, 1, True)
        assert len(depths) <= 1 and max(depths, default=1) <= self.H
        assert out == sorted(out) and len(out) == self.live
        # leaf chain visits the same entries
        chained = []
        bid = self.root
        while node(bid).kind == INTERNAL:
            bid = node(bid).entries[0][2]
        while bid:
            n = node(bid)
            chained.extend((k, s) for k, s, _ in n.entries)
            bid = n.next
        assert chained == out
        return out

    def close(self) -> None:
        self.oram.close()
