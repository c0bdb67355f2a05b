"""Command-line entry point wiring ingestion, profiling, estimation,
training and the layout experiment.

Every report-producing command writes JSON + CSV plus a rendered figure
under --out, along with a run.json capturing flags, seed and versions.
All randomness flows from --seed through stage-derived sub-seeds.

Exit codes: 0 success, 1 usage error, 2 data error, 3 missing dependency
(embedding store, checkpoint, ground truth).
"""
from __future__ import annotations

import json
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import __version__
from .corpus import (
    DatasetManifest,
    filter_columns,
    ground_truths,
    load_ground_truth,
    load_table,
    save_ground_truth,
    split_dataset,
)
from .errors import (
    DataError,
    EmbeddingLookupError,
    IngestionError,
    MissingDependencyError,
    NdvkitError,
    TransportError,
)
from .estimators import ESTIMATORS
from .evaluation import (
    BenchmarkSpec,
    aggregate,
    BenchmarkReport,
    layout_experiment,
    run_benchmark,
    write_layout_series,
    write_report,
)
from .semantics import (
    FileEmbedder,
    HashEmbedder,
    RemoteEmbedder,
    build_store,
    read_embedding_file,
    serialize_column,
    write_embedding_file,
)


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with default values for any flag; flags override it.")
@click.pass_context
def cli(ctx, config):
    """Distinct-value estimation under minimal data access."""
    if config:
        with open(config, encoding="utf-8") as fp:
            ctx.default_map = json.load(fp)


def _write_run_meta(out_dir: Path, command: str, params: dict) -> None:
    import numpy

    meta = {
        "command": command,
        "params": {k: v for k, v in params.items() if not k.startswith("_")},
        "versions": {
            "ndvkit": __version__,
            "python": sys.version.split()[0],
            "numpy": numpy.__version__,
        },
    }
    with open(out_dir / "run.json", "w", encoding="utf-8") as fp:
        json.dump(meta, fp, indent=1, default=str)


def _provider_from(spec: str, dim: int):
    if spec == "test":
        return HashEmbedder(dim)
    if spec.startswith("file:"):
        path = Path(spec[5:])
        if not path.exists():
            raise MissingDependencyError(f"embedding store not found: {path}")
        return FileEmbedder(read_embedding_file(path))
    if spec.startswith("http://") or spec.startswith("https://"):
        return RemoteEmbedder(spec, dim=dim)
    raise click.UsageError(f"unknown provider {spec!r}; use test, file:PATH or http(s)://URL")


def _load_manifest(path: Path) -> DatasetManifest:
    if not path.exists():
        raise MissingDependencyError(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fp:
        return DatasetManifest.from_json(json.load(fp))


def _load_split_tables(manifest: DatasetManifest, split: str):
    # reload with the same ingestion options the ground truth was built with
    drop_empty = bool(manifest.options.get("drop_empty", False))
    if split not in manifest.splits:
        raise DataError(f"unknown split {split!r}; manifest has {sorted(manifest.splits)}")
    tables = []
    for table_id in manifest.splits[split]:
        src = manifest.sources.get(table_id)
        if src is None:
            raise MissingDependencyError(f"manifest has no source path for table {table_id}")
        table = load_table(src, drop_empty=drop_empty, table_id=table_id)
        filtered, _ = filter_columns(table)
        if filtered is None:
            raise DataError(f"table {table_id} has no usable columns on reload")
        tables.append(filtered)
    return tables


def _parse_methods(methods: str, checkpoints: dict) -> tuple[str, ...]:
    names = []
    for part in methods.split(","):
        part = part.strip()
        if not part:
            continue
        if part == "all-classical":
            names.extend(ESTIMATORS)
        elif part == "all":
            names.extend(ESTIMATORS)
            names.extend(checkpoints)
        else:
            names.append(part)
    seen = []
    for name in names:
        if name not in seen:
            seen.append(name)
    return tuple(seen)


def _parse_checkpoints(entries) -> dict:
    from .model import load_checkpoint

    out = {}
    for entry in entries:
        tag, _, path = entry.partition("=")
        if not path:
            tag, path = "learned", tag
        p = Path(path)
        if not p.exists():
            raise MissingDependencyError(f"checkpoint not found: {p}")
        out[tag] = load_checkpoint(p)
    return out


@cli.command()
@click.argument("csvs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True)
@click.option("--ratios", default="0.62,0.18,0.20", show_default=True,
              help="train,test,validation fractions; must sum to 1.")
@click.option("--drop-empty", is_flag=True, default=False,
              help="Drop empty cells instead of counting them as values.")
def ingest(csvs, out, seed, ratios, drop_empty):
    """Load CSVs, filter semantics-free columns, split, compute ground truth."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ratio_tuple = tuple(float(x) for x in ratios.split(","))
    if len(ratio_tuple) != 3:
        raise click.UsageError("--ratios needs exactly three comma-separated fractions")

    tables, exclusions, sources = [], [], {}
    failures = []
    for path in csvs:
        try:
            raw = load_table(path, drop_empty=drop_empty)
        except IngestionError as exc:
            failures.append(str(exc))
            continue
        if raw.table_id in sources:
            raise DataError(f"duplicate table id {raw.table_id!r} from {path}")
        filtered, excl = filter_columns(raw)
        exclusions.extend(excl)
        if filtered is not None:
            tables.append(filtered)
            sources[filtered.table_id] = str(Path(path).resolve())
    if failures:
        for msg in failures:
            click.echo(f"error: {msg}", err=True)
        raise IngestionError(f"{len(failures)} file(s) failed to ingest")

    manifest = split_dataset(tables, seed=seed, ratios=ratio_tuple)
    manifest.exclusions = exclusions
    manifest.sources = sources
    manifest.options = {"drop_empty": drop_empty}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fp:
        json.dump(manifest.to_json(), fp, indent=1)

    gts = []
    for table in tables:
        gts.extend(ground_truths(table))
    save_ground_truth(gts, out_dir / "ground_truth.jsonl")
    _write_run_meta(out_dir, "ingest", {"seed": seed, "ratios": ratios, "drop_empty": drop_empty,
                                        "files": len(csvs), "tables": len(tables)})
    click.echo(f"ingested {len(tables)} table(s), {len(gts)} column(s); "
               f"{len(exclusions)} exclusion record(s)")


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--ground-truth", "gt_path", default=None, type=click.Path(),
              help="Defaults to ground_truth.jsonl next to the manifest.")
@click.option("--split", default="test", show_default=True)
@click.option("--mode", type=click.Choice(["sequential", "random"]), default="sequential",
              show_default=True)
@click.option("--n", "n_rows", default=None, type=int, help="Rows per column (0 = no data).")
@click.option("--fraction", default=None, type=float, help="Fraction of N per column.")
@click.option("--methods", default="all-classical", show_default=True)
@click.option("--checkpoint", "checkpoint_entries", multiple=True,
              help="TAG=PATH of a trained model; TAG becomes the method name.")
@click.option("--provider", default="test", show_default=True,
              help="test, file:PATH (ndv-emb-v1 store) or an http(s) endpoint.")
@click.option("--dim", default=768, show_default=True)
@click.option("--clamp", is_flag=True, default=False)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def estimate(manifest_path, gt_path, split, mode, n_rows, fraction, methods,
             checkpoint_entries, provider, dim, clamp, seed, jobs, out):
    """Benchmark estimators on a split; writes report.json/csv and a figure."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = Path(manifest_path)
    manifest = _load_manifest(manifest_path)
    gt_file = Path(gt_path) if gt_path else manifest_path.parent / "ground_truth.jsonl"
    if not gt_file.exists():
        raise MissingDependencyError(f"ground truth not found: {gt_file}")
    ground_truth = load_ground_truth(gt_file)

    checkpoints = _parse_checkpoints(checkpoint_entries)
    method_tuple = _parse_methods(methods, checkpoints)
    if n_rows is None and fraction is None:
        n_rows = 100
    spec = BenchmarkSpec(methods=method_tuple, mode=mode, n=n_rows, fraction=fraction,
                         seed=seed, clamp=clamp)
    emb_provider = _provider_from(provider, dim) if (checkpoints or provider != "test") else HashEmbedder(dim)
    tables = _load_split_tables(manifest, split)

    if jobs > 1 and len(tables) > 1:
        chunks = [tables[i::jobs] for i in range(jobs)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(
                lambda chunk: run_benchmark(chunk, ground_truth, spec, emb_provider, checkpoints),
                [c for c in chunks if c],
            ))
        report = _merge_reports(spec, parts)
    else:
        report = run_benchmark(tables, ground_truth, spec, emb_provider, checkpoints)

    write_report(report, out_dir / "report.json", "json")
    write_report(report, out_dir / "report.csv", "csv")
    from .plots import render_report_figure

    render_report_figure(report, out_dir / "report.png")
    _write_run_meta(out_dir, "estimate", {"split": split, "mode": mode, "n": n_rows,
                                          "fraction": fraction, "methods": list(method_tuple),
                                          "seed": seed, "clamp": clamp, "jobs": jobs})
    for method, agg in report.per_method.items():
        click.echo(f"{method:>10s}  mean={agg.to_json()['mean']}  p90={agg.to_json()['p90']}")
    for method, count in report.not_applicable.items():
        click.echo(f"{method:>10s}  N/A for {count} column(s)")


def _merge_reports(spec: BenchmarkSpec, parts) -> BenchmarkReport:
    merged = BenchmarkReport(spec=spec)
    q_by_method: dict[str, list[float]] = {m: [] for m in spec.methods}
    for part in parts:
        merged.records.extend(part.records)
        for m, c in part.not_applicable.items():
            merged.not_applicable[m] = merged.not_applicable.get(m, 0) + c
    import math

    for rec in merged.records:
        q = rec["q"]
        if isinstance(q, float) and not math.isnan(q) and rec["column"] != "*":
            q_by_method[rec["method"]].append(q)
    for m, qs in q_by_method.items():
        if qs:
            merged.per_method[m] = aggregate(qs)
    return merged


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--ground-truth", "gt_path", default=None, type=click.Path())
@click.option("--provider", default="test", show_default=True)
@click.option("--dim", default=768, show_default=True)
@click.option("--heads", default=8, show_default=True)
@click.option("--layers", default=1, show_default=True)
@click.option("--cutoff", default=100, show_default=True)
@click.option("--hidden", default="384,128,64", show_default=True)
@click.option("--use-stats/--no-use-stats", default=True, show_default=True,
              help="--no-use-stats trains the no-data model (n=0 regime).")
@click.option("--ablation", default="full", show_default=True,
              type=click.Choice(["full", "wo_col", "wo_tab", "wo_tab_and_col",
                                 "permute_col", "permute_tab"]))
@click.option("--log1p-profile", is_flag=True, default=False,
              help="Feed log1p of the profile counts instead of raw counts.")
@click.option("--lr", default=0.001, show_default=True)
@click.option("--batch", default=256, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--sample-n", default=100, show_default=True)
@click.option("--access", type=click.Choice(["sequential", "random"]), default="sequential",
              show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def train(manifest_path, gt_path, provider, dim, heads, layers, cutoff, hidden, use_stats,
          ablation, log1p_profile, lr, batch, epochs, sample_n, access, seed, out):
    """Train the learned estimator; writes checkpoint.json, train_log.jsonl
    and a training-curve figure."""
    from .model import ModelConfig, TrainConfig
    from .model import train as train_model

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = Path(manifest_path)
    manifest = _load_manifest(manifest_path)
    gt_file = Path(gt_path) if gt_path else manifest_path.parent / "ground_truth.jsonl"
    if not gt_file.exists():
        raise MissingDependencyError(f"ground truth not found: {gt_file}")
    ground_truth = load_ground_truth(gt_file)
    emb_provider = _provider_from(provider, dim)

    config = ModelConfig(
        dim=emb_provider.dim, heads=heads, layers=layers, cutoff=cutoff,
        use_stats=use_stats, hidden=tuple(int(x) for x in hidden.split(",")),
        variant=ablation, log1p_profile=log1p_profile,
    )
    train_cfg = TrainConfig(learning_rate=lr, batch_columns=batch, max_epochs=epochs,
                            seed=seed, sample_n=sample_n, access=access)
    train_tables = _load_split_tables(manifest, "train")
    val_tables = _load_split_tables(manifest, "validation")
    checkpoint, log = train_model(train_tables, val_tables, ground_truth, emb_provider,
                                  config, train_cfg)

    from .model import save_checkpoint

    save_checkpoint(checkpoint, out_dir / "checkpoint.json")
    with open(out_dir / "train_log.jsonl", "w", encoding="utf-8") as fp:
        for entry in log:
            fp.write(json.dumps(entry) + "\n")
    from .plots import render_training_figure

    render_training_figure(log, out_dir / "training.png")
    _write_run_meta(out_dir, "train", {"provider": provider, "dim": emb_provider.dim,
                                       "heads": heads, "layers": layers, "ablation": ablation,
                                       "use_stats": use_stats, "lr": lr, "batch": batch,
                                       "epochs": epochs, "seed": seed})
    click.echo(f"best epoch {checkpoint.selected_epoch} "
               f"val q90 {checkpoint.val_q90 if checkpoint.val_q90 != float('inf') else 'inf'}")


@cli.command()
@click.option("--seed", default=0, show_default=True)
@click.option("--methods", default="all-classical", show_default=True)
@click.option("--checkpoint", "checkpoint_entries", multiple=True, help="TAG=PATH")
@click.option("--provider", default="test", show_default=True)
@click.option("--dim", default=768, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def layout(seed, methods, checkpoint_entries, provider, dim, out):
    """Run the synthetic data-layout sweep (101 replacement steps)."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoints = _parse_checkpoints(checkpoint_entries)
    method_tuple = _parse_methods(methods, checkpoints)
    emb_provider = _provider_from(provider, dim) if checkpoints else None
    series = layout_experiment(seed, methods=method_tuple, provider=emb_provider,
                               checkpoints=checkpoints)
    write_layout_series(series, out_dir / "layout.json", "json")
    write_layout_series(series, out_dir / "layout.csv", "csv")
    from .plots import render_layout_figure

    render_layout_figure(series, out_dir / "layout.png")
    _write_run_meta(out_dir, "layout", {"seed": seed, "methods": list(method_tuple)})
    click.echo(f"layout series written for {len(method_tuple)} method(s), k=0..100")


@cli.group()
def embed():
    """Export serialized column texts / import an embedding store."""


@embed.command("export")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--ablation", default="full", show_default=True,
              type=click.Choice(["full", "permute_col", "permute_tab"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--vectors-out", default=None, type=click.Path(dir_okay=False),
              help="Also build a ready ndv-emb-v1 store with the test embedder.")
@click.option("--dim", default=768, show_default=True)
def embed_export(manifest_path, out, ablation, seed, vectors_out, dim):
    """Write one deduplicated serialized column text per line, for an
    external encoder to consume."""
    from .model import ablation_texts

    manifest = _load_manifest(Path(manifest_path))
    texts: set[str] = set()
    for split in manifest.splits.values():
        for table_id in split:
            src = manifest.sources.get(table_id)
            if src is None:
                raise MissingDependencyError(f"manifest has no source path for table {table_id}")
            table = load_table(src, table_id=table_id)
            filtered, _ = filter_columns(table)
            if filtered is None:
                continue
            base = [serialize_column(s).text for s in filtered.schemas]
            texts.update(ablation_texts(base, ablation, table_id, seed))
    ordered = sorted(texts)
    with open(out, "w", encoding="utf-8") as fp:
        for text in ordered:
            fp.write(text + "\n")
    click.echo(f"wrote {len(ordered)} unique column text(s) to {out}")
    if vectors_out:
        store = build_store(ordered, HashEmbedder(dim))
        write_embedding_file(vectors_out, store)
        click.echo(f"wrote test-embedder store ({store.dim} dims) to {vectors_out}")


@embed.command("import")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def embed_import(in_path, out):
    """Validate an ndv-emb-v1 file and install it at --out."""
    store = read_embedding_file(in_path)
    shutil.copyfile(in_path, out)
    click.echo(f"validated {len(store.vectors)} embedding(s), dim {store.dim}, "
               f"provider {store.provider}; installed at {out}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (MissingDependencyError, EmbeddingLookupError, TransportError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except NdvkitError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
