"""Selectivity and contiguity against the planner's choice, with every
candidate's exact cost."""

from __future__ import annotations

import random

from obliq.config import EngineConfig
from obliq.engine import Engine
from obliq.planner import PlannerConfig

ROWS = 2000


def main() -> None:
    # room for about a hundred result rows in oblivious memory
    config = EngineConfig(block_size=128, cipher_seed=0, oblivious_memory_bytes=100 * 17,
                          planner=PlannerConfig(continuous_enabled=True))
    for frac in (0.05, 0.5, 0.95):
        for contiguous in (True, False):
            r = int(ROWS * frac)
            hits = set(range(r)) if contiguous else set(random.Random(1).sample(range(ROWS), r))
            eng = Engine(config)
            eng.execute(f"CREATE TABLE t (id INT, hit INT) WITH CAPACITY = {ROWS}")
            eng.insert_rows("t", [(i, int(i in hits)) for i in range(ROWS)])
            plan = eng.execute("SELECT * FROM t WHERE hit = 1").report.phases[0]
            print(f"{frac:>4.0%} {'contiguous' if contiguous else 'scattered':<10} -> {plan.algorithm}")


if __name__ == "__main__":
    main()
