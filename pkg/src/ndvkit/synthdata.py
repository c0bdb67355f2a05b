"""Synthetic corpus where a name token determines the NDV regime.

Used by the validation suite and the README demo: column names carry one
of three regime tokens ("id" -> nearly all-distinct, "flag" -> 2..3
values, "code" -> about sqrt(N) values), while the data is laid out in
clustered runs so a 100-row prefix profile looks alike across regimes.
A statistics-only estimator is structurally blind here; a semantics-aware
one is not. That contrast is the point.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import ColumnData, ColumnSchema, TableRecord, stable_seed

REGIMES = ("id", "flag", "code")

_PREFIXES = (
    "user", "order", "product", "customer", "invoice", "session", "account",
    "shipment", "ticket", "vendor", "region", "device", "payment", "event",
)
_FLAG_WORDS = ("active", "deleted", "verified", "primary", "internal")


@dataclass(frozen=True)
class SynthSpec:
    tables: int = 600
    min_cols: int = 3
    max_cols: int = 6
    min_rows: int = 400
    max_rows: int = 4000


def _column_values(regime: str, n_rows: int, rng: random.Random) -> tuple[list[str], int]:
    """Clustered (sorted-run) layout; returns values and the exact NDV.

    flag and code columns get a first run longer than 100 rows, so their
    prefix profiles are byte-identical (one value, 100 times) even though
    their true NDVs differ by an order of magnitude. Only the name knows.
    """
    if regime == "id":
        return [f"v{k}" for k in range(n_rows)], n_rows
    if regime == "flag":
        d = rng.choice((2, 3))
    else:  # code
        base = round(n_rows**0.5)
        d = max(4, base + rng.randint(-base // 4, base // 4))
    first_run = rng.randint(120, min(400, n_rows - (d - 1)))
    rest = n_rows - first_run
    cuts = sorted(rng.sample(range(1, rest), d - 2)) if d > 2 else []
    run_lengths = [first_run] + [b - a for a, b in zip([0] + cuts, cuts + [rest])]
    values = []
    for vi, run in enumerate(run_lengths):
        values.extend([f"v{vi}"] * run)
    return values, d


def _column_name(regime: str, rng: random.Random, used: set[str]) -> str:
    while True:
        prefix = rng.choice(_PREFIXES)
        if regime == "flag":
            name = f"{rng.choice(_FLAG_WORDS)}_{regime}"
        else:
            name = f"{prefix}_{regime}"
        if name not in used:
            used.add(name)
            return name
        name = f"{prefix}{rng.randint(2, 99)}_{regime}"
        if name not in used:
            used.add(name)
            return name


def synth_corpus(seed: int, spec: SynthSpec = SynthSpec()) -> list[TableRecord]:
    """Deterministic token-regime corpus of whole tables."""
    tables = []
    for ti in range(spec.tables):
        rng = random.Random(stable_seed(seed, "synth-table", ti))
        n_rows = rng.randint(spec.min_rows, spec.max_rows)
        n_cols = rng.randint(spec.min_cols, spec.max_cols)
        used: set[str] = set()
        schemas, columns = [], []
        for _ in range(n_cols):
            regime = rng.choice(REGIMES)
            name = _column_name(regime, rng, used)
            values, _ = _column_values(regime, n_rows, rng)
            declared = "big int" if regime == "id" else "string"
            schemas.append(ColumnSchema(name=name, declared_type=declared))
            columns.append(ColumnData(values))
        tables.append(TableRecord(f"synth-{ti:04d}", tuple(schemas), tuple(columns)))
    return tables
