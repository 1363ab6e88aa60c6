"""Engine configuration and its ``key = value`` file format."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import QueryError
from .planner import PlannerConfig

DEFAULT_BUDGET = 20 * 1024 * 1024


@dataclass(frozen=True)
class EngineConfig:
    oblivious_memory_bytes: int = DEFAULT_BUDGET
    block_size: int = 512
    oram_recursion: bool = False
    padding_mode: bool = False
    # result size for padded queries; 0 means the capacity of the table read
    pad_target: int = 0
    pad_targets: dict[str, int] = field(default_factory=dict)
    planner: PlannerConfig = PlannerConfig()
    # deterministic keys, nonces, and ORAM leaves; for tests and paired runs
    cipher_seed: int | None = None
    enclave_sort_rows: int = 0
    join_fanout: int = 1
    index_fanout: int | None = None
    default_capacity: int = 1024
    fast_insert: bool = True

    def __post_init__(self) -> None:
        if self.oblivious_memory_bytes < 0:
            raise QueryError("oblivious_memory_bytes must be non-negative")
        if self.join_fanout < 1:
            raise QueryError("join_fanout must be at least 1")

    def pad_for(self, table: str, capacity: int) -> int:
        return self.pad_targets.get(table, self.pad_target) or capacity

    @classmethod
    def from_items(cls, items: dict[str, str]) -> EngineConfig:
        """Build from string settings, e.g. the lines of a config file."""
        base: dict[str, object] = {}
        planner: dict[str, object] = {}
        pads: dict[str, int] = {}
        kinds = {f.name: f.type for f in fields(cls)}
        pkinds = {f.name: f.type for f in fields(PlannerConfig)}
        for key, raw in items.items():
            if key.startswith("planner."):
                name = key[len("planner."):]
                if name not in pkinds:
                    raise QueryError(f"unknown config key {key!r}")
                planner[name] = _convert(key, raw, pkinds[name])
            elif key.startswith("pad_target."):
                pads[key[len("pad_target."):]] = _convert(key, raw, "int")
            elif key in kinds and key not in ("planner", "pad_targets"):
                base[key] = _convert(key, raw, kinds[key])
            else:
                raise QueryError(f"unknown config key {key!r}")
        return cls(planner=PlannerConfig(**planner), pad_targets=pads, **base)

    @classmethod
    def from_file(cls, path: str | Path) -> EngineConfig:
        return cls.from_items(parse_config_text(Path(path).read_text()))

    def with_(self, **changes: object) -> EngineConfig:
        return replace(self, **changes)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise QueryError(f"config line {n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = value
    return out


def _convert(key: str, raw: str, kind: str) -> object:
    kind = str(kind)
    try:
        if "bool" in kind:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "float" in kind:
            return float(raw)
        if "None" in kind and raw.lower() in ("none", ""):
            return None
        return int(raw)
    except ValueError:
        raise QueryError(f"bad value {raw!r} for config key {key!r}") from None
