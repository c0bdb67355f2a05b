import json
from pathlib import Path

import pytest

from ndvkit.cli import main
from ndvkit.corpus import write_table
from ndvkit.synthdata import SynthSpec, synth_corpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("csvs")
    tables = synth_corpus(seed=23, spec=SynthSpec(tables=12, min_cols=2, max_cols=4,
                                                  min_rows=250, max_rows=500))
    for t in tables:
        write_table(t, root / f"{t.table_id}.csv")
    return root


@pytest.fixture(scope="module")
def ingested(corpus_dir, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("ingested")
    csvs = sorted(str(p) for p in corpus_dir.glob("*.csv"))
    code = main(["ingest", *csvs, "--out", str(out), "--seed", "5"])
    assert code == 0
    return out


def test_ingest_outputs(ingested):
    manifest = json.loads((ingested / "manifest.json").read_text())
    assert set(manifest["splits"]) == {"train", "test", "validation"}
    all_ids = [i for ids in manifest["splits"].values() for i in ids]
    assert len(all_ids) == 12 and len(set(all_ids)) == 12
    assert (ingested / "ground_truth.jsonl").exists()
    assert (ingested / "run.json").exists()


def test_ingest_deterministic(corpus_dir, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    csvs = sorted(str(p) for p in corpus_dir.glob("*.csv"))
    assert main(["ingest", *csvs, "--out", str(out1), "--seed", "5"]) == 0
    assert main(["ingest", *csvs, "--out", str(out2), "--seed", "5"]) == 0
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["splits"] == m2["splits"]


def test_ingest_bad_ratios(corpus_dir, tmp_path):
    csvs = sorted(str(p) for p in corpus_dir.glob("*.csv"))[:3]
    code = main(["ingest", *csvs, "--out", str(tmp_path / "x"), "--ratios", "0.5,0.5,0.1"])
    assert code == 2


def test_estimate_sequential_report(ingested, tmp_path):
    out = tmp_path / "report"
    code = main([
        "estimate", "--manifest", str(ingested / "manifest.json"), "--split", "test",
        "--mode", "sequential", "--n", "100", "--methods", "all-classical",
        "--out", str(out), "--seed", "7",
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["per_method"]) == 11
    assert (out / "report.csv").exists()
    assert (out / "report.png").exists()
    assert (out / "run.json").exists()


def test_estimate_random_mode(ingested, tmp_path):
    out = tmp_path / "rand"
    code = main([
        "estimate", "--manifest", str(ingested / "manifest.json"), "--split", "test",
        "--mode", "random", "--n", "50", "--methods", "gee,chao", "--seed", "7",
        "--out", str(out),
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["per_method"]) == {"gee", "chao"}


def test_estimate_jobs_parallel_matches_serial(ingested, tmp_path):
    args = ["estimate", "--manifest", str(ingested / "manifest.json"), "--split", "train",
            "--mode", "sequential", "--n", "60", "--methods", "gee,bootstrap",
            "--seed", "3"]
    out1, out2 = tmp_path / "serial", tmp_path / "par"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2), "--jobs", "3"]) == 0
    r1 = json.loads((out1 / "report.json").read_text())
    r2 = json.loads((out2 / "report.json").read_text())
    assert r1["per_method"] == r2["per_method"]
    key = lambda r: (r["table_id"], r["column"], r["method"])
    assert sorted(r1["records"], key=key) == sorted(r2["records"], key=key)


def test_estimate_missing_manifest(tmp_path):
    code = main(["estimate", "--manifest", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")])
    assert code == 3


def test_train_and_estimate_learned(ingested, tmp_path):
    train_out = tmp_path / "model"
    code = main([
        "train", "--manifest", str(ingested / "manifest.json"), "--provider", "test",
        "--dim", "24", "--heads", "4", "--hidden", "16,8", "--cutoff", "30",
        "--epochs", "3", "--batch", "64", "--seed", "2", "--out", str(train_out),
    ])
    assert code == 0
    assert (train_out / "checkpoint.json").exists()
    log_lines = (train_out / "train_log.jsonl").read_text().strip().splitlines()
    assert len(log_lines) == 3
    assert (train_out / "training.png").exists()

    est_out = tmp_path / "learned-report"
    code = main([
        "estimate", "--manifest", str(ingested / "manifest.json"), "--split", "test",
        "--mode", "sequential", "--n", "100", "--methods", "gee,learned",
        "--checkpoint", f"learned={train_out / 'checkpoint.json'}",
        "--provider", "test", "--dim", "24",
        "--out", str(est_out), "--seed", "2",
    ])
    assert code == 0
    report = json.loads((est_out / "report.json").read_text())
    assert "learned" in report["per_method"]


def test_train_nodata_model(ingested, tmp_path):
    out = tmp_path / "nodata"
    code = main([
        "train", "--manifest", str(ingested / "manifest.json"), "--provider", "test",
        "--dim", "24", "--heads", "4", "--hidden", "16,8", "--no-use-stats",
        "--epochs", "2", "--batch", "64", "--seed", "2", "--out", str(out),
    ])
    assert code == 0
    ckpt = json.loads((out / "checkpoint.json").read_text())
    assert ckpt["config"]["use_stats"] is False


def test_estimate_n0_learned_nodata(ingested, tmp_path):
    nodata_out = tmp_path / "m0"
    assert main([
        "train", "--manifest", str(ingested / "manifest.json"), "--provider", "test",
        "--dim", "24", "--heads", "4", "--hidden", "16,8", "--no-use-stats",
        "--epochs", "2", "--batch", "64", "--seed", "4", "--out", str(nodata_out),
    ]) == 0
    out = tmp_path / "n0-report"
    code = main([
        "estimate", "--manifest", str(ingested / "manifest.json"), "--split", "test",
        "--mode", "sequential", "--n", "0",
        "--methods", "all-classical,learned-nodata",
        "--checkpoint", f"learned-nodata={nodata_out / 'checkpoint.json'}",
        "--provider", "test", "--dim", "24",
        "--out", str(out), "--seed", "4",
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["per_method"]) == {"learned-nodata"}
    assert report["not_applicable"]["gee"] > 0


def test_layout_command(tmp_path):
    out = tmp_path / "layout"
    code = main(["layout", "--seed", "0", "--methods", "chao,gee", "--out", str(out)])
    assert code == 0
    series = json.loads((out / "layout.json").read_text())
    assert series["q"]["chao"][0] == 7000.0
    assert len(series["k"]) == 101
    assert (out / "layout.png").exists()
    assert (out / "layout.csv").exists()


def test_embed_export_import_self_hosting(ingested, tmp_path):
    texts = tmp_path / "texts.txt"
    store = tmp_path / "store.jsonl"
    code = main(["embed", "export", "--manifest", str(ingested / "manifest.json"),
                 "--out", str(texts), "--vectors-out", str(store), "--dim", "32"])
    assert code == 0
    lines = texts.read_text().strip().splitlines()
    assert len(lines) == len(set(lines)) > 0

    installed = tmp_path / "installed.jsonl"
    assert main(["embed", "import", "--in", str(store), "--out", str(installed)]) == 0

    # a file provider backed by the imported store can drive estimation
    model_out = tmp_path / "file-model"
    code = main([
        "train", "--manifest", str(ingested / "manifest.json"),
        "--provider", f"file:{installed}", "--heads", "4", "--hidden", "12,6",
        "--cutoff", "20", "--epochs", "2", "--batch", "64", "--seed", "1",
        "--out", str(model_out),
    ])
    assert code == 0


def test_embed_import_rejects_bad_store(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"format": "ndv-emb-v1", "dim": 3}) + "\n"
                   + json.dumps({"key": "a", "vec": [1.0]}) + "\n")
    code = main(["embed", "import", "--in", str(bad), "--out", str(tmp_path / "o.jsonl")])
    assert code == 2


def test_usage_error_exit_code():
    assert main(["estimate", "--no-such-flag"]) == 1
    assert main(["frobnicate"]) == 1


def test_config_overlay(ingested, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"layout": {"seed": 3, "methods": "chao"}}))
    out = tmp_path / "overlay-out"
    assert main(["--config", str(cfg), "layout", "--out", str(out)]) == 0
    series = json.loads((out / "layout.json").read_text())
    assert series["seed"] == 3 and list(series["q"]) == ["chao"]


def test_drop_empty_round_trips_through_estimate(tmp_path):
    csv_dir = tmp_path / "data"
    csv_dir.mkdir()
    # with --drop-empty: first column has D=2 over N=2, second D=3 over N=4
    for k in range(3):
        (csv_dir / f"holes{k}.csv").write_text(
            "alpha_code,beta_code\na,x\n,y\nb,\n,z\n", encoding="utf-8"
        )
    out = tmp_path / "ingested"
    csvs = sorted(str(p) for p in csv_dir.glob("*.csv"))
    assert main(["ingest", *csvs, "--out", str(out), "--drop-empty", "--seed", "1"]) == 0
    gts = [json.loads(l) for l in (out / "ground_truth.jsonl").read_text().splitlines()]
    by_col = {(g["table_id"], g["column_index"]): g for g in gts}
    assert by_col[("holes0", 0)]["D"] == 2 and by_col[("holes0", 0)]["N"] == 2
    assert by_col[("holes0", 1)]["D"] == 3 and by_col[("holes0", 1)]["N"] == 3

    report_dir = tmp_path / "report"
    assert main(["estimate", "--manifest", str(out / "manifest.json"),
                 "--split", "train", "--mode", "sequential", "--n", "10",
                 "--methods", "gee", "--out", str(report_dir)]) == 0
    report = json.loads((report_dir / "report.json").read_text())
    # full-sample prefix: gee degenerates to d = D exactly, so every q is 1
    assert all(r["q"] == 1.0 for r in report["records"])
