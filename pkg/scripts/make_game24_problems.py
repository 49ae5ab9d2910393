"""Regenerate src/smot/data/game24_problems.txt.

Enumerates every multiset of four numbers from 1..13 that can reach 24,
orders them from easiest to hardest and keeps the first 1,000. Difficulty
is estimated by the share of opening moves that keep the puzzle solvable
(fewer good openings = harder), then by the number of distinct solved
leaves of the exhaustive tree, then lexicographically.

Usage: python scripts/make_game24_problems.py [OUT]
"""

import sys
from itertools import combinations_with_replacement
from pathlib import Path

from smot.extraction import Outcome
from smot.game24 import Game24State, brute_force_solvable, exhaustive_tree, successors

COUNT = 1000


def difficulty(state):
    moves = successors(state)
    good = sum(1 for _, s in moves if brute_force_solvable(s))
    tree = exhaustive_tree(state)
    wins = sum(1 for n in tree.nodes.values() if n.outcome is Outcome.SUCCESS)
    return (-good / len(moves), -wins, state.numbers)


def main(out):
    pool = [
        Game24State.of(c)
        for c in combinations_with_replacement(range(1, 14), 4)
        if brute_force_solvable(c)
    ]
    ranked = sorted(pool, key=difficulty)[:COUNT]
    lines = [
        "# 24-point game problems, easiest first (generated by",
        "# scripts/make_game24_problems.py). Problems 1-900 are the training",
        "# split, 901-1000 the evaluation split.",
        f"# {len(pool)} solvable multisets over 1..13; the first {COUNT} are kept.",
    ]
    lines += [" ".join(str(int(v)) for v in s.numbers) for s in ranked]
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(ranked)} problems to {out} ({len(pool)} solvable in total)")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/smot/data/game24_problems.txt")
