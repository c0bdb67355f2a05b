"""q-error metric, percentile aggregation, benchmark runners and the
data-layout sensitivity experiment.

q-error is max(Dhat/D, D/Dhat): symmetric, >= 1, and +inf for estimates
that are non-positive or non-finite (any monotone penalty would rank the
same; +inf is conservative and visible in reports). Means propagate +inf;
a finite-only mean is reported alongside purely as a diagnostic.
"""
from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import ColumnData, ColumnSchema, TableRecord, exact_ndv, stable_seed
from .errors import DataError
from .estimators import DEFAULT_SOLVER, ESTIMATORS, SolverConfig, clamp_estimate, estimate_all
from .profiles import frequency_profile, random_sample, sequential_sample

CLASSICAL_METHODS = tuple(ESTIMATORS)


@dataclass(frozen=True)
class QError:
    value: float  # >= 1, or +inf

    def __post_init__(self):
        if not (self.value >= 1.0 or math.isinf(self.value)):
            raise DataError(f"q-error must be >= 1 or inf, got {self.value}")


def q_error(d_hat: float, d: int) -> QError:
    """max(Dhat/D, D/Dhat); non-positive or non-finite estimates map to +inf."""
    if d < 1:
        raise DataError(f"ground truth must be >= 1, got {d}")
    if not math.isfinite(d_hat) or d_hat <= 0.0:
        return QError(math.inf)
    return QError(max(d_hat / d, d / d_hat))


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: element ceil(p/100 * m) of the ascending
    sort (1-based); +inf entries sort last."""
    if not values:
        raise DataError("percentile of an empty sequence")
    if not 0.0 < p <= 100.0:
        raise DataError(f"percentile rank must be in (0, 100], got {p}")
    ordered = sorted(values)
    rank = math.ceil(p / 100.0 * len(ordered))
    return ordered[max(rank, 1) - 1]


@dataclass(frozen=True)
class BenchmarkSpec:
    methods: tuple[str, ...]
    mode: str = "sequential"       # sequential | random
    n: int | None = 100            # row budget; exclusive with fraction
    fraction: float | None = None  # fraction of N, in (0, 1]
    seed: int = 0
    clamp: bool = False

    def __post_init__(self):
        if self.mode not in ("sequential", "random"):
            raise DataError(f"unknown access mode {self.mode!r}")
        if (self.n is None) == (self.fraction is None):
            raise DataError("exactly one of n and fraction must be set")
        if self.n is not None and self.n < 0:
            raise DataError(f"n must be >= 0, got {self.n}")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise DataError(f"fraction must be in (0, 1], got {self.fraction}")

    def rows_for(self, N: int) -> int:
        if self.fraction is not None:
            return min(N, max(1, round(self.fraction * N)))
        return min(N, self.n)

    def to_json(self) -> dict:
        return {
            "methods": list(self.methods), "mode": self.mode, "n": self.n,
            "fraction": self.fraction, "seed": self.seed, "clamp": self.clamp,
        }


@dataclass
class MethodAggregate:
    mean: float
    p50: float
    p75: float
    p90: float
    p95: float
    p99: float
    count: int
    inf_count: int
    mean_finite: float | None  # diagnostic only; means over q-errors propagate inf

    def to_json(self) -> dict:
        out = {k: _render(v) for k, v in self.__dict__.items()}
        return out


def _render(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        if math.isnan(v):
            return "nan"
    return v


def aggregate(q_values: Sequence[float]) -> MethodAggregate:
    finite = [q for q in q_values if math.isfinite(q)]
    inf_count = len(q_values) - len(finite)
    # fsum: aggregation must not depend on record order (parallel runs
    # deliver columns in chunked order)
    mean = math.inf if inf_count else math.fsum(q_values) / len(q_values)
    return MethodAggregate(
        mean=mean,
        p50=percentile(q_values, 50),
        p75=percentile(q_values, 75),
        p90=percentile(q_values, 90),
        p95=percentile(q_values, 95),
        p99=percentile(q_values, 99),
        count=len(q_values),
        inf_count=inf_count,
        mean_finite=(math.fsum(finite) / len(finite)) if finite else None,
    )


@dataclass
class BenchmarkReport:
    spec: BenchmarkSpec
    records: list[dict] = field(default_factory=list)
    per_method: dict[str, MethodAggregate] = field(default_factory=dict)
    not_applicable: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "per_method": {m: agg.to_json() for m, agg in self.per_method.items()},
            "not_applicable": self.not_applicable,
            "records": [
                {**r, "D_hat": _render(r["D_hat"]), "q": _render(r["q"])} for r in self.records
            ],
        }


def run_benchmark(
    tables: Sequence[TableRecord],
    ground_truth: dict,
    spec: BenchmarkSpec,
    provider=None,
    checkpoints: dict | None = None,
    solver: SolverConfig = DEFAULT_SOLVER,
) -> BenchmarkReport:
    """Sample every column per the spec, run the selected estimators, and
    aggregate q-errors per method. Learned methods come from `checkpoints`
    (tag -> Checkpoint) and consume embeddings via `provider`; a missing
    embedding marks that method not-applicable and the run continues."""
    from . import model as model_mod

    checkpoints = checkpoints or {}
    unknown = [m for m in spec.methods if m not in ESTIMATORS and m not in checkpoints]
    if unknown:
        raise DataError(f"unknown methods {unknown}; no matching estimator or checkpoint")

    report = BenchmarkReport(spec=spec)
    q_by_method: dict[str, list[float]] = {m: [] for m in spec.methods}
    na_by_method: dict[str, int] = {m: 0 for m in spec.methods}
    classical = [m for m in spec.methods if m in ESTIMATORS]

    for table in tables:
        profiles = []
        for i, col in enumerate(table.columns):
            n_rows = spec.rows_for(col.N)
            if spec.mode == "random":
                sample = random_sample(col, n_rows, stable_seed(spec.seed, table.table_id, i))
            else:
                sample = sequential_sample(col, n_rows)
            profiles.append(frequency_profile(sample))

        learned_preds: dict[str, Sequence[float] | None] = {}
        for tag, ckpt in checkpoints.items():
            if tag not in spec.methods:
                continue
            try:
                learned_preds[tag] = model_mod.predict(
                    table, provider, ckpt,
                    profiles=profiles if ckpt.config.use_stats else None,
                )
            except Exception as exc:  # missing embeddings etc: NA, keep going
                learned_preds[tag] = None
                report.records.append(
                    {"table_id": table.table_id, "column": "*", "method": tag,
                     "D": None, "D_hat": math.nan, "q": math.nan, "note": str(exc)}
                )

        for i, (schema, col) in enumerate(zip(table.schemas, table.columns)):
            gt = ground_truth.get((table.table_id, i))
            if gt is None:
                raise DataError(f"missing ground truth for {table.table_id} column {i}")
            profile = profiles[i]
            estimates = estimate_all(profile, solver) if classical else {}
            for method in spec.methods:
                if method in ESTIMATORS:
                    est = estimates[method]
                    value = est.value
                    applicable = est.applicable
                    if applicable and spec.clamp:
                        value = clamp_estimate(est, profile.d, col.N).clamped
                else:
                    preds = learned_preds.get(method)
                    applicable = preds is not None
                    value = float(preds[i]) if applicable else math.nan
                if not applicable:
                    na_by_method[method] += 1
                    q = math.nan
                else:
                    q = q_error(value, gt.D).value
                    q_by_method[method].append(q)
                report.records.append(
                    {"table_id": table.table_id, "column": schema.name, "method": method,
                     "D": gt.D, "D_hat": value, "q": q}
                )

    for method in spec.methods:
        if q_by_method[method]:
            report.per_method[method] = aggregate(q_by_method[method])
    report.not_applicable = {m: c for m, c in na_by_method.items() if c}
    return report


# --------------------------- data-layout experiment ---------------------------

LAYOUT_N = 10_000
LAYOUT_SELECTIVITY = 0.7
LAYOUT_RUN = 3_001  # leading rows sharing one value
LAYOUT_PREFIX = 100


def layout_table(seed: int) -> TableRecord:
    """Synthetic two-column table: a distinct row id and an address column of
    N=10,000 rows whose first 3,001 rows share one value, with the tail
    filled by a seeded shuffle of distinct fillers so the exact NDV is
    selectivity * N = 7,000."""
    d_target = round(LAYOUT_N * LAYOUT_SELECTIVITY)
    tail_len = LAYOUT_N - LAYOUT_RUN
    fillers = [f"addr_{k}" for k in range(d_target - 1)]
    if len(fillers) != tail_len:
        # constant + fillers must hit the target exactly; pad duplicates of
        # the constant if the geometry ever changes
        raise DataError("layout geometry out of sync")
    random.Random(stable_seed(seed, "layout-tail")).shuffle(fillers)
    address = ["HQ"] * LAYOUT_RUN + fillers
    ids = [str(k + 1) for k in range(LAYOUT_N)]
    return TableRecord(
        table_id="layout-synthetic",
        schemas=(
            ColumnSchema("EmployeeID", "int"),
            ColumnSchema("Office Address", "string"),
        ),
        columns=(ColumnData(ids), ColumnData(address)),
    )


def layout_experiment(
    seed: int,
    methods: Sequence[str] = CLASSICAL_METHODS,
    provider=None,
    checkpoints: dict | None = None,
    solver: SolverConfig = DEFAULT_SOLVER,
) -> dict:
    """Replace the first k of the address column's first 100 rows (k=0..100)
    with seeded draws from rows 101..10,000 of the original column, estimate
    from the sequential-100 prefix at every k, and record q-errors against
    the ground truth recomputed on the modified column."""
    from . import model as model_mod

    checkpoints = checkpoints or {}
    base = layout_table(seed)
    address = list(base.columns[1].values)
    draw_rng = random.Random(stable_seed(seed, "layout-draws"))
    replacements = [address[draw_rng.randrange(LAYOUT_PREFIX, LAYOUT_N)] for _ in range(LAYOUT_PREFIX)]

    series: dict[str, list[float]] = {m: [] for m in methods}
    truths: list[int] = []
    for k in range(LAYOUT_PREFIX + 1):
        values = list(address)
        values[:k] = replacements[:k]
        col = ColumnData(values)
        truth = exact_ndv(col)
        truths.append(truth)
        profile = frequency_profile(sequential_sample(col, LAYOUT_PREFIX))
        estimates = estimate_all(profile, solver)
        table_k = TableRecord(base.table_id, base.schemas, (base.columns[0], col))
        for method in methods:
            if method in ESTIMATORS:
                value = estimates[method].value
            elif method in checkpoints:
                ckpt = checkpoints[method]
                prof_arg = None
                if ckpt.config.use_stats:
                    id_profile = frequency_profile(sequential_sample(base.columns[0], LAYOUT_PREFIX))
                    prof_arg = [id_profile, profile]
                value = float(model_mod.predict(table_k, provider, ckpt, profiles=prof_arg)[1])
            else:
                raise DataError(f"unknown method {method!r}")
            series[method].append(q_error(value, truth).value)
    return {"seed": seed, "k": list(range(LAYOUT_PREFIX + 1)), "D": truths, "q": series}


# --------------------------------- reporting ---------------------------------

def write_report(report: BenchmarkReport, path: str | Path, fmt: str = "json") -> None:
    """Persist per-column records and aggregates; +inf renders as "inf"."""
    path = Path(path)
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fp:
            json.dump(report.to_json(), fp, indent=1)
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["table_id", "column", "method", "D", "D_hat", "q"])
            for r in report.records:
                writer.writerow(
                    [r["table_id"], r["column"], r["method"], r["D"],
                     _render(r["D_hat"]), _render(r["q"])]
                )
    else:
        raise DataError(f"unknown report format {fmt!r}")


def read_report(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fp:
        return json.load(fp)


def write_layout_series(series: dict, path: str | Path, fmt: str = "json") -> None:
    path = Path(path)
    if fmt == "json":
        rendered = {
            **series,
            "q": {m: [_render(v) for v in vals] for m, vals in series["q"].items()},
        }
        with open(path, "w", encoding="utf-8") as fp:
            json.dump(rendered, fp, indent=1)
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["k", "D", "method", "q"])
            for method, vals in series["q"].items():
                for k, q in zip(series["k"], vals):
                    writer.writerow([k, series["D"][k], method, _render(q)])
    else:
        raise DataError(f"unknown layout format {fmt!r}")
