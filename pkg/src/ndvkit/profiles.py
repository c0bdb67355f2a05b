"""Sample acquisition and frequency-profile construction.

A frequency profile is the "frequency of frequencies" of a sample: f[j] is
the number of distinct values that occur exactly j times. Every estimator
in this package is a pure function of (f, n, d, N), so profiles are the
only thing estimators ever see; they never touch raw column data.

Profiles are stored sparsely (j -> count) because n can reach millions
while the number of occupied frequency classes stays small.
"""
from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

from .corpus import ColumnData
from .errors import DataError


@dataclass(frozen=True)
class Sample:
    """A sequentially or randomly drawn subset of a column, in draw order."""

    items: tuple[str, ...]
    n: int
    mode: str  # "sequential" | "random"
    N: int
    seed: int | None = None

    def __post_init__(self):
        if self.n != len(self.items):
            raise DataError(f"sample size {self.n} != item count {len(self.items)}")
        if self.n > self.N:
            raise DataError(f"sample size {self.n} exceeds column size {self.N}")


@dataclass(frozen=True)
class FrequencyProfile:
    """Sparse frequency profile plus the scalars every estimator consumes.

    Instances built by `frequency_profile` always satisfy n = sum(j*f[j])
    and d = sum(f[j]). Direct construction does not enforce the identities,
    so that formula fixtures can state n independently of f.
    """

    f: Mapping[int, int]
    n: int
    d: int
    N: int
    r: float = field(init=False)

    def __post_init__(self):
        # ascending-j iteration order, so float accumulations downstream are
        # independent of how the counts were assembled
        object.__setattr__(self, "f", dict(sorted(dict(self.f).items())))
        object.__setattr__(self, "r", self.n / self.N if self.N > 0 else 0.0)

    @classmethod
    def from_counts(cls, f: Mapping[int, int], N: int) -> "FrequencyProfile":
        """Build a consistent profile from frequency-class counts alone."""
        n = sum(j * c for j, c in f.items())
        d = sum(f.values())
        return cls(f=f, n=n, d=d, N=N)

    def get(self, j: int) -> int:
        return self.f.get(j, 0)

    def validate(self) -> None:
        """Check the defining identities; raises DataError on violation."""
        n = sum(j * c for j, c in self.f.items())
        d = sum(self.f.values())
        if n != self.n or d != self.d:
            raise DataError(
                f"inconsistent profile: n={self.n} (sum j*f_j={n}), d={self.d} (sum f_j={d})"
            )

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "N": self.N,
            "r": self.r,
            "f": {str(j): c for j, c in sorted(self.f.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FrequencyProfile":
        return cls(
            f={int(j): int(c) for j, c in obj["f"].items()},
            n=int(obj["n"]),
            d=int(obj["d"]),
            N=int(obj["N"]),
        )


def sequential_sample(column: ColumnData, n: int) -> Sample:
    """First n values in physical order; n=0 is the no-data mode."""
    if n < 0 or n > column.N:
        raise DataError(f"cannot take {n} sequential rows from a column of {column.N}")
    items = column.values[:n] if n > 0 else ()
    return Sample(items=tuple(items), n=n, mode="sequential", N=column.N)


def random_sample(column: ColumnData, n: int, seed: int) -> Sample:
    """Uniform sample without replacement, deterministic per seed."""
    if n < 0 or n > column.N:
        raise DataError(f"cannot sample {n} rows from a column of {column.N}")
    if n == 0:
        return Sample(items=(), n=0, mode="random", N=column.N, seed=seed)
    rng = random.Random(seed)
    values = column.values
    idx = rng.sample(range(column.N), n)
    return Sample(items=tuple(values[i] for i in idx), n=n, mode="random", N=column.N, seed=seed)


def frequency_profile(sample: Sample) -> FrequencyProfile:
    """Exact frequency-of-frequencies of the sample; empty sample -> all-zero."""
    counts = Counter(sample.items)
    f = Counter(counts.values())
    return FrequencyProfile(f=dict(f), n=sample.n, d=len(counts), N=sample.N)


def profile_cutoff(profile: FrequencyProfile, K: int = 100) -> list[float]:
    """Dense vector [f_1 .. f_K]; classes beyond min(K, n) are dropped, short
    profiles zero-padded. This is the fixed-length feature the learned
    estimator consumes."""
    if K < 1:
        raise DataError(f"cutoff length must be >= 1, got {K}")
    limit = min(K, profile.n)
    return [float(profile.get(j)) if j <= limit else 0.0 for j in range(1, K + 1)]


def table_row_count(column: ColumnData) -> int:
    """Total row count N, known from ingestion metadata rather than from
    scanning values (estimators must never peek past the sample)."""
    return column.N


def save_profile(profile: FrequencyProfile, fp: IO[str]) -> None:
    json.dump(profile.to_json(), fp)


def load_profile(fp: IO[str]) -> FrequencyProfile:
    return FrequencyProfile.from_json(json.load(fp))


def profiles_of(columns: Sequence[ColumnData], n: int) -> list[FrequencyProfile]:
    """Sequential-prefix profiles for a list of columns, capping n at each N."""
    return [frequency_profile(sequential_sample(c, min(n, c.N))) for c in columns]
