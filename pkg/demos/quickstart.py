"""Create a table, run a few queries, and show what each one revealed."""

from __future__ import annotations

from obliq.config import EngineConfig
from obliq.engine import Engine


def main() -> None:
    eng = Engine(EngineConfig(block_size=128, cipher_seed=0))
    eng.execute("CREATE TABLE emp (id INT, dept INT, salary INT) WITH STORAGE = BOTH(id), CAPACITY = 256")
    eng.insert_rows("emp", [(i, i % 7, 1000 + 37 * i % 900) for i in range(200)])
    for sql in (
        "SELECT * FROM emp WHERE id BETWEEN 10 AND 14",
        "SELECT dept, COUNT(*), AVG(salary) FROM emp GROUP BY dept",
        "SELECT COUNT(*) FROM emp WHERE salary > 1500",
        "UPDATE emp SET salary = salary + 10 WHERE dept = 3",
    ):
        res = eng.execute(sql)
        print(sql)
        for row in res.render_rows()[:5]:
            print("   ", row)
        print(res.report.render())
        print()


if __name__ == "__main__":
    main()
