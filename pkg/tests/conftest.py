import math
import random
import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ndvkit.corpus import ColumnData, ColumnSchema, TableRecord


# ------------------------- independent test oracles -------------------------

def goodman_oracle(N: int, n: int, f: dict) -> float:
    """Direct big-integer evaluation of the alternating factorial formula
    (independent of the production recurrence)."""
    d = sum(f.values())
    if n == N:
        return float(d)
    total = Fraction(d)
    for i in range(1, n + 1):
        fi = f.get(i, 0)
        if not fi:
            continue
        term = Fraction(
            math.factorial(N - n + i - 1) * math.factorial(n - i),
            math.factorial(N - n - 1) * math.factorial(n),
        )
        total += (-1) ** (i + 1) * term * fi
    return float(total)


def h_absent_oracle(N: int, n: int, x) -> Fraction:
    """Exact product form of the absence probability, valid for rational x:
    prod_{k=0}^{n-1} (N - x - k) / (N - k)."""
    x = Fraction(x)
    if x > N - n:
        return Fraction(0)
    p = Fraction(1)
    for k in range(n):
        p *= Fraction(N - x - k) / Fraction(N - k)
    return p


def rgs_sequences(n: int):
    """All length-n sequences canonical up to value relabeling (restricted
    growth strings): every ordered column over any alphabet is equivalent
    to exactly one of these."""
    seq = [0] * n

    def rec(i: int, peak: int):
        if i == n:
            yield tuple(seq)
            return
        for v in range(peak + 2):
            seq[i] = v
            yield from rec(i + 1, max(peak, v))

    yield from rec(1, 0) if n > 1 else iter([(0,)])


def random_column(rng: random.Random, max_n: int = 60, max_alpha: int = 20) -> list[str]:
    n = rng.randint(1, max_n)
    alpha = rng.randint(1, max_alpha)
    return [f"v{rng.randrange(alpha)}" for _ in range(n)]


# --------------------------------- fixtures ---------------------------------

@pytest.fixture
def small_table() -> TableRecord:
    return TableRecord(
        table_id="fruit",
        schemas=(
            ColumnSchema("FruitName", "string", None, "Name of the fruit"),
            ColumnSchema("Price", "double", "NOT NULL", None),
            ColumnSchema("InStock", "bool"),
        ),
        columns=(
            ColumnData(["apple", "pear", "apple", "kiwi"]),
            ColumnData(["1.5", "2.0", "1.5", "3.25"]),
            ColumnData(["true", "false", "true", "true"]),
        ),
    )
