from __future__ import annotations

import random

import pytest

from obliq.catalog import FLAT, INDEXED, Catalog
from obliq.memory import ObliviousBudget, UntrustedMemory
from obliq.operators import ExecContext
from obliq.schema import Schema

SCHEMA = Schema.of(("id", "int"), ("v", "int"), ("name", "text", 8))


class Env:
    """A fresh memory, budget, and catalog sharing one seed."""

    def __init__(self, seed: int = 0, budget: int = 1 << 24, block_size: int = 128, fanout: int | None = None):
        self.memory = UntrustedMemory(seed=seed)
        self.budget = ObliviousBudget(budget)
        self.rng = random.Random(seed)
        self.catalog = Catalog(self.memory, self.budget, self.rng, block_size, index_fanout=fanout)
        self.ctx = ExecContext(self.memory, self.budget, block_size, self.rng, hash_seed=seed)

    def table(self, rows, capacity=None, methods=(FLAT,), name="t", key="id", schema=SCHEMA):
        methods = set(methods)
        t = self.catalog.create(name, schema, methods, capacity or max(len(rows), 1), key if INDEXED in methods else None)
        t.bulk_load([tuple(r) for r in rows])
        return t

    def events(self, fn, *args, **kw):
        """Run ``fn`` and return (result, trace of exactly its events)."""
        self.memory.trace.snapshot()
        out = fn(*args, **kw)
        return out, self.memory.trace.snapshot()


def random_rows(rng: random.Random, n: int, key_range: int = 50):
    return [(rng.randrange(key_range), rng.randrange(1000), rng.choice(["ab", "cd", "ef", "x"])) for _ in range(n)]


@pytest.fixture
def env():
    return Env()
