"""Dataset ingestion: CSV tables, column filtering, splits, and exact NDV.

Ingestion is the only place raw data enters the pipeline. Tables are small
enough to hold in memory (see Non-goals in the README); everything after
load is pure and immutable, so per-file ingestion can run in parallel.
"""
from __future__ import annotations

import csv
import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, IngestionError

TYPE_NAMES = ("big int", "double", "bool", "timestamp", "string")


@dataclass(frozen=True)
class ColumnSchema:
    """Declared column metadata; constraints and comment may each be absent."""

    name: str
    declared_type: str
    constraints: str | None = None
    comment: str | None = None


class ColumnData:
    """One column's cell values, as text, in physical row order.

    Access to the value sequence goes through the `values` property, which
    counts reads so tests can prove that no-data estimation never touches
    cell data. N is ingestion metadata and free to read.
    """

    __slots__ = ("_values", "N", "reads")

    def __init__(self, values: Sequence[str]):
        self._values = tuple(values)
        self.N = len(self._values)
        self.reads = 0

    @property
    def values(self) -> tuple[str, ...]:
        self.reads += 1
        return self._values

    def __eq__(self, other):
        return isinstance(other, ColumnData) and self._values == other._values

    def __hash__(self):
        return hash(self._values)

    def __repr__(self):
        return f"ColumnData(N={self.N})"


@dataclass(frozen=True)
class TableRecord:
    table_id: str
    schemas: tuple[ColumnSchema, ...]
    columns: tuple[ColumnData, ...]

    def __post_init__(self):
        if len(self.schemas) != len(self.columns):
            raise DataError(
                f"table {self.table_id}: {len(self.schemas)} schemas vs {len(self.columns)} columns"
            )
        if not self.schemas:
            raise DataError(f"table {self.table_id}: no columns")

    @property
    def t(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class GroundTruth:
    table_id: str
    column_index: int
    D: int
    N: int

    def __post_init__(self):
        if self.N >= 1 and not (1 <= self.D <= self.N):
            raise DataError(f"ground truth D={self.D} outside [1, {self.N}]")


@dataclass
class DatasetManifest:
    seed: int
    ratios: tuple[float, float, float]
    splits: dict[str, list[str]]  # train/test/validation -> table ids
    exclusions: list[dict] = field(default_factory=list)
    sources: dict[str, str] = field(default_factory=dict)  # table id -> csv path
    options: dict = field(default_factory=dict)  # ingestion options, e.g. drop_empty

    def split_of(self, table_id: str) -> str:
        for name, ids in self.splits.items():
            if table_id in ids:
                return name
        raise DataError(f"table {table_id} not in any split")

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "splits": self.splits,
            "exclusions": self.exclusions,
            "sources": self.sources,
            "options": self.options,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        splits = {k: list(v) for k, v in obj["splits"].items()}
        flat = [i for ids in splits.values() for i in ids]
        if len(flat) != len(set(flat)):
            raise DataError("manifest assigns some table to more than one split")
        return cls(
            seed=int(obj["seed"]),
            ratios=tuple(obj["ratios"]),
            splits=splits,
            exclusions=list(obj.get("exclusions", [])),
            sources=dict(obj.get("sources", {})),
            options=dict(obj.get("options", {})),
        )


def _infer_type(values: Iterable[str]) -> str:
    """Scan-based type inference for CSV cells: big int, double, bool,
    timestamp, with string as the fallback. Empty cells are ignored."""
    non_empty = [v for v in values if v != ""]
    if not non_empty:
        return "string"
    checks = (
        ("big int", _is_int),
        ("double", _is_float),
        ("bool", _is_bool),
        ("timestamp", _is_timestamp),
    )
    for name, pred in checks:
        if all(pred(v) for v in non_empty):
            return name
    return "string"


_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _is_int(v: str) -> bool:
    return bool(_INT_RE.match(v))


def _is_float(v: str) -> bool:
    return bool(_FLOAT_RE.match(v))


def _is_bool(v: str) -> bool:
    return v.lower() in ("true", "false")


def _is_timestamp(v: str) -> bool:
    try:
        datetime.fromisoformat(v)
        return True
    except ValueError:
        return False


def load_table(
    path: str | Path,
    schema_path: str | Path | None = None,
    drop_empty: bool = False,
    table_id: str | None = None,
) -> TableRecord:
    """Load a header-bearing CSV (RFC-4180) into a TableRecord.

    Declared types are inferred by scanning values unless a sidecar schema
    file overrides them. A sidecar named `<stem>.schema.json` next to the
    CSV is picked up automatically: a JSON list of
    {name, type, constraints?, comment?} matched to headers by name.

    drop_empty removes empty cells from each column independently (the
    default keeps them as ordinary values); a column emptied entirely is
    kept with N=0 and excluded later by filter_columns.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.reader(fp)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        width = len(header)
        rows: list[list[str]] = []
        for i, row in enumerate(reader, start=1):
            if len(row) != width:
                raise IngestionError(f"{path}: row {i} has {len(row)} fields, expected {width}")
            rows.append(row)

    sidecar: dict[str, dict] = {}
    if schema_path is None:
        candidate = path.with_suffix(".schema.json")
        if candidate.exists():
            schema_path = candidate
    if schema_path is not None:
        with open(schema_path, encoding="utf-8") as fp:
            entries = json.load(fp)
        if not isinstance(entries, list):
            raise IngestionError(f"{schema_path}: expected a JSON list of column entries")
        sidecar = {e["name"]: e for e in entries}

    schemas = []
    columns = []
    for ci, name in enumerate(header):
        cells = [row[ci] for row in rows]
        if drop_empty:
            cells = [c for c in cells if c != ""]
        extra = sidecar.get(name, {})
        schemas.append(
            ColumnSchema(
                name=name,
                declared_type=extra.get("type") or _infer_type(cells),
                constraints=extra.get("constraints"),
                comment=extra.get("comment"),
            )
        )
        columns.append(ColumnData(cells))

    return TableRecord(
        table_id=table_id or path.stem,
        schemas=tuple(schemas),
        columns=tuple(columns),
    )


def write_table(table: TableRecord, path: str | Path) -> None:
    """Serialize back to CSV (used for round-trip checks and synth tables).
    Requires equal column lengths."""
    lengths = {c.N for c in table.columns}
    if len(lengths) != 1:
        raise DataError(f"table {table.table_id}: unequal column lengths {sorted(lengths)}")
    cols = [c.values for c in table.columns]
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow([s.name for s in table.schemas])
        writer.writerows(zip(*cols))


# Name-based filters: columns whose names carry no usable semantics.
# The concrete patterns are fixed here; the categories (too short, purely
# numeric, scientific notation, timestamp-like) are what matters.
_NUMERIC_NAME_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)$")
_SCI_NAME_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)[eE][+-]?\d+$")
_EPOCH_RE = re.compile(r"^\d{10}$|^\d{13}$")


def _name_exclusion_reason(name: str) -> str | None:
    if len(name) <= 1:
        return "name length <= 1"
    if _NUMERIC_NAME_RE.match(name):
        return "name is entirely numeric"
    if _SCI_NAME_RE.match(name):
        return "name is scientific notation"
    if _EPOCH_RE.match(name):
        return "name is an epoch timestamp"
    if _is_timestamp(name):
        return "name parses as a timestamp"
    return None


def filter_columns(table: TableRecord) -> tuple[TableRecord | None, list[dict]]:
    """Drop columns with semantics-free names, preserving order.

    Returns (filtered table or None if nothing survives, exclusion records).
    Idempotent: filtering a filtered table excludes nothing further.
    """
    keep_s, keep_c, exclusions = [], [], []
    for schema, col in zip(table.schemas, table.columns):
        reason = _name_exclusion_reason(schema.name)
        if reason is None and col.N == 0:
            reason = "column has no rows"
        if reason is None:
            keep_s.append(schema)
            keep_c.append(col)
        else:
            exclusions.append({"table_id": table.table_id, "column": schema.name, "reason": reason})
    if not keep_s:
        exclusions.append(
            {"table_id": table.table_id, "column": "*", "reason": "all columns excluded; table dropped"}
        )
        return None, exclusions
    return TableRecord(table.table_id, tuple(keep_s), tuple(keep_c)), exclusions


DEFAULT_RATIOS = (0.62, 0.18, 0.20)


def split_dataset(
    tables: Sequence[TableRecord],
    seed: int,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
) -> DatasetManifest:
    """Partition whole tables into train/test/validation, seeded.

    Table ids are sorted before shuffling so the assignment depends only on
    the id set and the seed, not on input order.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios}")
    if any(r < 0 for r in ratios):
        raise DataError(f"split ratios must be non-negative, got {ratios}")
    ids = sorted(t.table_id for t in tables)
    if len(ids) != len(set(ids)):
        raise DataError("duplicate table ids")
    if len(ids) < 3:
        raise DataError(f"need at least 3 tables to split, got {len(ids)}")

    rng = random.Random(seed)
    rng.shuffle(ids)
    total = len(ids)
    sizes = [round(total * ratios[0]), 0, 0]
    sizes[1] = round(total * (ratios[0] + ratios[1])) - sizes[0]
    sizes[2] = total - sizes[0] - sizes[1]
    # every split must be usable downstream; steal from the largest if a
    # rounding boundary zeroed one out
    while min(sizes) == 0:
        sizes[sizes.index(max(sizes))] -= 1
        sizes[sizes.index(min(sizes))] += 1
    train = ids[: sizes[0]]
    test = ids[sizes[0] : sizes[0] + sizes[1]]
    validation = ids[sizes[0] + sizes[1] :]
    return DatasetManifest(
        seed=seed,
        ratios=tuple(ratios),
        splits={"train": sorted(train), "test": sorted(test), "validation": sorted(validation)},
    )


def exact_ndv(column: ColumnData) -> int:
    """Exact distinct count over byte-exact text values (the oracle)."""
    if column.N == 0:
        raise DataError("cannot compute NDV of an empty column")
    return len(set(column.values))


def ground_truths(table: TableRecord) -> list[GroundTruth]:
    return [
        GroundTruth(table.table_id, i, exact_ndv(col), col.N)
        for i, col in enumerate(table.columns)
    ]


def save_ground_truth(records: Iterable[GroundTruth], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for gt in records:
            fp.write(
                json.dumps(
                    {"table_id": gt.table_id, "column_index": gt.column_index, "D": gt.D, "N": gt.N}
                )
                + "\n"
            )


def load_ground_truth(path: str | Path) -> dict[tuple[str, int], GroundTruth]:
    out = {}
    with open(path, encoding="utf-8") as fp:
        for line in fp:
            if not line.strip():
                continue
            obj = json.loads(line)
            gt = GroundTruth(obj["table_id"], int(obj["column_index"]), int(obj["D"]), int(obj["N"]))
            out[(gt.table_id, gt.column_index)] = gt
    return out


def stable_seed(*parts) -> int:
    """Derive a deterministic 63-bit sub-seed from heterogeneous parts."""
    h = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1
