from __future__ import annotations

import json

import pytest

from obliq.config import DEFAULT_BUDGET, EngineConfig, parse_config_text
from obliq.errors import MacFailure, QueryError, RollbackDetected
from obliq.planner import PlannerConfig
from obliq.sealing import EnclaveState, seal, unseal


def test_defaults():
    c = EngineConfig()
    assert c.oblivious_memory_bytes == DEFAULT_BUDGET == 20 * 1024 * 1024
    assert c.planner == PlannerConfig()
    assert not c.padding_mode and not c.planner.continuous_enabled


def test_config_file(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text(
        "# budget\n"
        "oblivious_memory_bytes = 4096\n"
        "block_size=256\n"
        "padding_mode = yes   # pad everything\n"
        "pad_target = 50\n"
        "pad_target.orders = 7\n"
        "planner.continuous_enabled = true\n"
        "planner.large_threshold = 0.5\n"
        "index_fanout = none\n"
    )
    c = EngineConfig.from_file(p)
    assert (c.oblivious_memory_bytes, c.block_size, c.padding_mode) == (4096, 256, True)
    assert c.planner == PlannerConfig(large_threshold=0.5, continuous_enabled=True)
    assert c.index_fanout is None
    assert c.pad_for("orders", 100) == 7
    assert c.pad_for("other", 100) == 50
    assert EngineConfig().pad_for("x", 100) == 100


@pytest.mark.parametrize(
    "text",
    ["nonsense", "bogus = 1", "block_size = big", "padding_mode = maybe", "planner.nope = 1", "join_fanout = 0"],
)
def test_bad_config(text):
    with pytest.raises(QueryError):
        EngineConfig.from_items(parse_config_text(text))


def test_seal_unseal():
    state = EnclaveState.new()
    blob = seal(state, b"payload")
    assert state.generation == 1
    assert unseal(state, blob) == (b"payload", 1)


def test_rollback():
    state = EnclaveState.new()
    old = seal(state, b"a")
    seal(state, b"b")
    with pytest.raises(RollbackDetected):
        unseal(state, old)


def test_header_is_authenticated():
    state = EnclaveState.new()
    blob = bytearray(seal(state, b"a"))
    blob[8] += 1  # claim a newer generation
    with pytest.raises(MacFailure):
        unseal(state, bytes(blob))


@pytest.mark.parametrize("cut", [0, 10, 35])
def test_truncated(cut):
    state = EnclaveState.new()
    blob = seal(state, b"payload")
    with pytest.raises(MacFailure):
        unseal(state, blob[:cut])


def test_state_file(tmp_path):
    p = tmp_path / "enclave.json"
    s = EnclaveState.load_or_create(p)
    seal(s, b"x")
    s.save(p)
    back = EnclaveState.load(p)
    assert (back.key, back.generation) == (s.key, 1)
    assert set(json.loads(p.read_text())) == {"sealing_key", "generation"}
