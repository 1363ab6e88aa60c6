"""Sealed database snapshots with rollback detection.

A snapshot is encrypted and authenticated under the enclave's sealing key
and carries a generation number. The enclave remembers the newest
generation it sealed; opening anything older is a rollback. Here that
enclave state lives in a small JSON file, which stands in for a hardware
sealing key and a monotonic counter.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import MacFailure, RollbackDetected

MAGIC = b"OBLQSEAL"
_HEAD = struct.Struct("<8sQ")  # magic, generation
NONCE = 12


@dataclass
class EnclaveState:
    key: bytes
    generation: int = 0

    @classmethod
    def new(cls) -> EnclaveState:
        return cls(AESGCM.generate_key(bit_length=128), 0)

    @classmethod
    def load(cls, path: str | Path) -> EnclaveState:
        data = json.loads(Path(path).read_text())
        return cls(bytes.fromhex(data["sealing_key"]), int(data["generation"]))

    @classmethod
    def load_or_create(cls, path: str | Path) -> EnclaveState:
        return cls.load(path) if Path(path).exists() else cls.new()

    def save(self, path: str | Path) -> None:
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(json.dumps({"sealing_key": self.key.hex(), "generation": self.generation}))
        os.replace(tmp, path)


def seal(state: EnclaveState, payload: bytes) -> bytes:
    """Encrypt ``payload`` under the next generation and advance the counter."""
    state.generation += 1
    head = _HEAD.pack(MAGIC, state.generation)
    nonce = os.urandom(NONCE)
    return head + nonce + AESGCM(state.key).encrypt(nonce, payload, head)


def unseal(state: EnclaveState, blob: bytes) -> tuple[bytes, int]:
    """Return ``(payload, generation)`` or raise on tampering or rollback."""
    if len(blob) < _HEAD.size + NONCE + 16:
        raise MacFailure("sealed file is truncated")
    head = blob[: _HEAD.size]
    magic, generation = _HEAD.unpack(head)
    nonce = blob[_HEAD.size : _HEAD.size + NONCE]
    try:
        payload = AESGCM(state.key).decrypt(nonce, blob[_HEAD.size + NONCE :], head)
    except InvalidTag:
        raise MacFailure("sealed file failed authentication") from None
    if magic != MAGIC:
        raise MacFailure("not a sealed database")
    if generation < state.generation:
        raise RollbackDetected(f"snapshot generation {generation} is older than the last sealed {state.generation}")
    return payload, generation
