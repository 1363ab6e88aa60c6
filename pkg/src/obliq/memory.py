"""Simulated enclave/untrusted memory split.

Untrusted memory is a set of block regions. Every block is sealed with
AES-GCM; the plaintext carries a small header (region id, address, revision,
row id) so the enclave can tell a forged block from a misplaced or replayed
one. The enclave keeps the authoritative revision of every slot.

Every block read or write appends one event to the global access trace. That
trace is what an adversary controlling the OS observes, and it is the object
of every obliviousness test in this package. Payload bytes never enter it.
"""

from __future__ import annotations

import hashlib
import os
import struct
from array import array
from dataclasses import dataclass
from typing import Any, Iterator, NamedTuple

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import (
    BudgetExceeded,
    MacFailure,
    MisplacedBlock,
    NeverWritten,
    StaleBlock,
)

READ = 0
WRITE = 1

NONCE_SIZE = 12
TAG_SIZE = 16
_HEADER = struct.Struct("<IqQq")  # region, address, revision, row id
HEADER_SIZE = _HEADER.size
NO_ROW = -1

# trace events are packed into one int64: region << 40 | op << 39 | address
_OP_SHIFT = 39
_REGION_SHIFT = 40
_ADDR_MASK = (1 << _OP_SHIFT) - 1


def encrypted_block_size(block_size: int) -> int:
    """Bytes one sealed block occupies in untrusted memory."""
    return NONCE_SIZE + HEADER_SIZE + block_size + TAG_SIZE


class AccessEvent(NamedTuple):
    seq: int
    region: int
    op: int
    address: int


class AccessTrace:
    """An immutable slice of the global access log."""

    def __init__(self, region: np.ndarray, op: np.ndarray, address: np.ndarray, start_seq: int = 0):
        self.region = region
        self.op = op
        self.address = address
        self.start_seq = start_seq

    @classmethod
    def from_packed(cls, packed: np.ndarray, start_seq: int = 0) -> AccessTrace:
        packed = np.asarray(packed, dtype=np.int64)
        return cls(
            (packed >> _REGION_SHIFT).astype(np.int64),
            ((packed >> _OP_SHIFT) & 1).astype(np.int8),
            (packed & _ADDR_MASK).astype(np.int64),
            start_seq,
        )

    @classmethod
    def empty(cls) -> AccessTrace:
        return cls.from_packed(np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.address)

    def __iter__(self) -> Iterator[AccessEvent]:
        for i in range(len(self)):
            yield AccessEvent(self.start_seq + i, int(self.region[i]), int(self.op[i]), int(self.address[i]))

    def __getitem__(self, i: int) -> AccessEvent:
        if i < 0:
            i += len(self)
        return AccessEvent(self.start_seq + i, int(self.region[i]), int(self.op[i]), int(self.address[i]))

    def slice(self, start: int, stop: int | None = None) -> AccessTrace:
        stop = len(self) if stop is None else stop
        return AccessTrace(self.region[start:stop], self.op[start:stop], self.address[start:stop], self.start_seq + start)

    def __add__(self, other: AccessTrace) -> AccessTrace:
        return AccessTrace(
            np.concatenate([self.region, other.region]),
            np.concatenate([self.op, other.op]),
            np.concatenate([self.address, other.address]),
            self.start_seq,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AccessTrace):
            return NotImplemented
        return (
            np.array_equal(self.region, other.region)
            and np.array_equal(self.op, other.op)
            and np.array_equal(self.address, other.address)
        )

    def __repr__(self) -> str:
        return f"AccessTrace({len(self)} events from seq {self.start_seq})"

    def for_region(self, region_id: int) -> AccessTrace:
        mask = self.region == region_id
        return AccessTrace(self.region[mask], self.op[mask], self.address[mask], self.start_seq)

    def count(self, region_id: int | None = None, op: int | None = None) -> int:
        mask = np.ones(len(self), dtype=bool)
        if region_id is not None:
            mask &= self.region == region_id
        if op is not None:
            mask &= self.op == op
        return int(mask.sum())

    def to_text(self) -> str:
        """Render as ``seq region op address`` lines, op being R or W."""
        ops = np.where(self.op == WRITE, "W", "R")
        lines = [
            f"{self.start_seq + i} {r} {o} {a}\n"
            for i, (r, o, a) in enumerate(zip(self.region.tolist(), ops.tolist(), self.address.tolist()))
        ]
        return "".join(lines)

    @classmethod
    def from_text(cls, text: str) -> AccessTrace:
        seqs, regions, ops, addrs = [], [], [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4 or parts[2] not in ("R", "W"):
                raise ValueError(f"malformed trace record on line {lineno}: {line!r}")
            seqs.append(int(parts[0]))
            regions.append(int(parts[1]))
            ops.append(WRITE if parts[2] == "W" else READ)
            addrs.append(int(parts[3]))
        start = seqs[0] if seqs else 0
        return cls(
            np.array(regions, dtype=np.int64),
            np.array(ops, dtype=np.int8),
            np.array(addrs, dtype=np.int64),
            start,
        )


class TraceRecorder:
    """Global, append-only access log with a movable snapshot mark."""

    def __init__(self) -> None:
        self._log = array("q")
        self._base = 0  # seq number of _log[0]; advanced by discard()
        self._mark = 0

    @classmethod
    def starting_at(cls, seq: int) -> TraceRecorder:
        """An empty recorder whose next event gets sequence number ``seq``."""
        rec = cls()
        rec._base = rec._mark = seq
        return rec

    def record(self, region_id: int, op: int, address: int) -> None:
        self._log.append((region_id << _REGION_SHIFT) | (op << _OP_SHIFT) | address)

    @property
    def seq(self) -> int:
        """Sequence number the next event will get."""
        return self._base + len(self._log)

    def since(self, seq: int) -> AccessTrace:
        start = max(seq - self._base, 0)
        packed = np.frombuffer(self._log, dtype=np.int64)[start:].copy() if self._log else np.zeros(0, np.int64)
        return AccessTrace.from_packed(packed, self._base + start)

    def snapshot(self) -> AccessTrace:
        """Events since the previous snapshot; moves the mark to now."""
        trace = self.since(self._mark)
        self._mark = self.seq
        return trace

    def full(self) -> AccessTrace:
        return self.since(self._base)

    def discard(self) -> None:
        """Drop retained events (long-running tests); sequence numbers keep counting."""
        self._base += len(self._log)
        self._log = array("q")
        self._mark = max(self._mark, self._base)


class Region:
    """One fixed-size array of sealed block slots in untrusted memory.

    Only :class:`UntrustedMemory` (and the test-only :class:`Adversary`) touch
    ``_slots``; everything else goes through ``read``/``write`` so the trace
    is complete.
    """

    def __init__(self, region_id: int, num_blocks: int, block_size: int, kind: str, label: str, bucket_size: int):
        self.id = region_id
        self.num_blocks = num_blocks
        self.block_size = block_size
        self.kind = kind
        self.label = label
        self.bucket_size = bucket_size
        self._slots: list[bytes | None] = [None] * num_blocks

    @property
    def encrypted_block_size(self) -> int:
        return encrypted_block_size(self.block_size)

    @property
    def nbytes(self) -> int:
        return self.num_blocks * self.encrypted_block_size

    def __len__(self) -> int:
        return self.num_blocks

    def __repr__(self) -> str:
        return f"Region(id={self.id}, {self.kind}:{self.label}, {self.num_blocks}x{self.block_size}B)"


MIN_BLOCK_SIZE = 2  # one in-use flag byte plus at least one value byte


class UntrustedMemory:
    """The enclave's only window onto untrusted storage.

    With ``seed`` set, keys and nonces are derived deterministically (a
    counter nonce under a seed-derived key) so whole sessions replay
    bit-for-bit. That mode exists for tests; never share a seed between
    engines holding real data.
    """

    def __init__(self, seed: int | None = None):
        self.trace = TraceRecorder()
        self.regions: dict[int, Region] = {}
        # every region ever created, dropped ones included, for reading old traces
        self.all_regions: dict[int, Region] = {}
        self._revisions: dict[int, array] = {}
        self._next_region = 0
        self._seed = seed
        if seed is None:
            self._key = os.urandom(16)
        else:
            self._key = hashlib.sha256(b"obliq-block-key" + seed.to_bytes(8, "little", signed=True)).digest()[:16]
        self._nonce_counter = 0
        self._aead = AESGCM(self._key)

    def __getstate__(self) -> dict[str, Any]:
        state = self.__dict__.copy()
        del state["_aead"]
        return state

    def __setstate__(self, state: dict[str, Any]) -> None:
        self.__dict__.update(state)
        self._aead = AESGCM(self._key)

    def _nonce(self) -> bytes:
        if self._seed is None:
            return os.urandom(NONCE_SIZE)
        self._nonce_counter += 1
        return self._nonce_counter.to_bytes(NONCE_SIZE, "little")

    def create_region(self, num_blocks: int, block_size: int, kind: str = "flat", label: str = "", bucket_size: int = 1) -> Region:
        if num_blocks < 1:
            raise ValueError("a region needs at least one block")
        if block_size < MIN_BLOCK_SIZE:
            raise ValueError(f"block size must be at least {MIN_BLOCK_SIZE} bytes")
        region = Region(self._next_region, num_blocks, block_size, kind, label, bucket_size)
        self._next_region += 1
        self.regions[region.id] = region
        self.all_regions[region.id] = region
        self._revisions[region.id] = array("q", bytes(8 * num_blocks))
        return region

    def drop_region(self, region: Region) -> None:
        """Release an intermediate region. Its id is never reused."""
        self.regions.pop(region.id, None)
        self._revisions.pop(region.id, None)
        region._slots = []

    def revision(self, region: Region, address: int) -> int:
        return self._revisions[region.id][address]

    def write(self, region: Region, address: int, payload: bytes, row_id: int = NO_ROW) -> None:
        if not 0 <= address < region.num_blocks:
            raise IndexError(f"address {address} outside region {region.id} of {region.num_blocks} blocks")
        if len(payload) != region.block_size:
            raise ValueError(f"payload of {len(payload)} bytes for block size {region.block_size}")
        revs = self._revisions[region.id]
        rev = revs[address] + 1
        nonce = self._nonce()
        plaintext = _HEADER.pack(region.id, address, rev, row_id) + payload
        region._slots[address] = nonce + self._aead.encrypt(nonce, plaintext, None)
        revs[address] = rev
        self.trace.record(region.id, WRITE, address)

    def read(self, region: Region, address: int, expect_row: int | None = None) -> tuple[bytes, int]:
        """Return ``(payload, row_id)`` after full integrity checking."""
        if not 0 <= address < region.num_blocks:
            raise IndexError(f"address {address} outside region {region.id} of {region.num_blocks} blocks")
        self.trace.record(region.id, READ, address)
        blob = region._slots[address]
        recorded = self._revisions[region.id][address]
        if blob is None:
            if recorded == 0:
                raise NeverWritten(f"region {region.id} slot {address} was never written")
            raise MacFailure(f"region {region.id} slot {address} vanished")
        try:
            plaintext = self._aead.decrypt(blob[:NONCE_SIZE], blob[NONCE_SIZE:], None)
        except InvalidTag:
            raise MacFailure(f"authentication failed for region {region.id} slot {address}") from None
        rid, addr, rev, row_id = _HEADER.unpack_from(plaintext)
        if rid != region.id or addr != address:
            raise MisplacedBlock(f"slot {region.id}:{address} holds the block of {rid}:{addr}")
        if rev != recorded:
            raise StaleBlock(f"slot {region.id}:{address} has revision {rev}, enclave expects {recorded}")
        if expect_row is not None and row_id != expect_row:
            raise MisplacedBlock(f"slot {region.id}:{address} claims row {row_id}, expected {expect_row}")
        return plaintext[HEADER_SIZE:], row_id


class ObliviousBuffer:
    """A charge against the oblivious-memory budget.

    Reads and writes of ``data`` are invisible to the adversary: nothing here
    touches the trace.
    """

    def __init__(self, budget: ObliviousBudget, nbytes: int):
        self.budget = budget
        self.nbytes = nbytes
        self.data: Any = None
        self._live = True

    def release(self) -> None:
        if self._live:
            self.budget.used_bytes -= self.nbytes
            self._live = False
            self.data = None

    def __enter__(self) -> ObliviousBuffer:
        return self

    def __exit__(self, *exc: object) -> None:
        self.release()


@dataclass
class ObliviousBudget:
    total_bytes: int
    used_bytes: int = 0

    @property
    def available(self) -> int:
        return self.total_bytes - self.used_bytes

    def alloc(self, nbytes: int) -> ObliviousBuffer:
        if nbytes < 0:
            raise ValueError("negative allocation")
        if self.used_bytes + nbytes > self.total_bytes:
            raise BudgetExceeded(
                f"need {nbytes} bytes of oblivious memory, {self.available} of {self.total_bytes} free"
            )
        self.used_bytes += nbytes
        return ObliviousBuffer(self, nbytes)


class Adversary:
    """The malicious OS: reads and rewrites raw ciphertext slots.

    Used by integrity tests. Nothing it does is traced, since the attacker
    is not the enclave.
    """

    def __init__(self, memory: UntrustedMemory):
        self.memory = memory

    def ciphertext(self, region: Region, address: int) -> bytes | None:
        return region._slots[address]

    def put(self, region: Region, address: int, blob: bytes | None) -> None:
        region._slots[address] = blob

    def flip_bit(self, region: Region, address: int, bit: int) -> None:
        blob = bytearray(region._slots[address])
        blob[bit // 8] ^= 1 << (bit % 8)
        region._slots[address] = bytes(blob)

    def copy(self, src: Region, src_addr: int, dst: Region, dst_addr: int) -> None:
        dst._slots[dst_addr] = src._slots[src_addr]

    def swap(self, region: Region, a: int, b: int) -> None:
        region._slots[a], region._slots[b] = region._slots[b], region._slots[a]
