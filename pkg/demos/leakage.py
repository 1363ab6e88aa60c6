"""Two databases with the same shape but different contents leave the same
trace; a build that skips dummy writes does not."""

from __future__ import annotations

from obliq.oblivtest import dummy_write_skipping_mutant, run_suite


def show(label: str, name: str) -> None:
    rep = run_suite(name, 20)
    print(f"{name:<12} {label}: {rep.equal} equal, {len(rep.diverged)} diverged")
    if rep.diverged:
        pair, first = rep.diverged[0]
        print(f"{'':<12} first divergence in pair {pair}: {first}")


def main() -> None:
    for name in ("select_hash", "join_opaque", "mutate_flat"):
        show("honest", name)
    with dummy_write_skipping_mutant():
        for name in ("select_hash", "mutate_flat"):
            show("mutant", name)


if __name__ == "__main__":
    main()
