"""Figure rendering for report outputs.

Every CLI report path drops a PNG next to its JSON/CSV so a run can be
eyeballed without loading the data anywhere. Uses the Agg backend; nothing
here ever opens a window.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import BenchmarkReport  # noqa: E402

_PERCENTILES = ("p50", "p75", "p90", "p95", "p99")


def _finite_or(v, fallback):
    if isinstance(v, str) or v is None:
        return fallback
    return v if math.isfinite(v) else fallback


def render_report_figure(report: BenchmarkReport, path: str | Path) -> None:
    """Grouped bars of q-error percentiles per method, log scale."""
    methods = list(report.per_method)
    if not methods:
        return
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(methods)), 4.0))
    width = 0.8 / len(_PERCENTILES)
    for pi, pname in enumerate(_PERCENTILES):
        xs = [mi + pi * width for mi in range(len(methods))]
        ys = [_finite_or(getattr(report.per_method[m], pname), 0.0) for m in methods]
        ax.bar(xs, ys, width=width, label=pname)
    ax.set_yscale("log")
    ax.set_xticks([mi + 0.4 for mi in range(len(methods))])
    ax.set_xticklabels(methods, rotation=45, ha="right")
    ax.set_ylabel("q-error")
    n_label = report.spec.fraction if report.spec.n is None else report.spec.n
    ax.set_title(f"q-error percentiles ({report.spec.mode}, n={n_label})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_layout_figure(series: Mapping, path: str | Path) -> None:
    """q-error vs number of replaced prefix rows, one line per method."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ks = series["k"]
    for method, qs in series["q"].items():
        ys = [_finite_or(q, float("nan")) for q in qs]
        ax.plot(ks, ys, label=method, linewidth=1.2)
    ax.set_yscale("log")
    ax.set_xlabel("replaced rows in the first 100")
    ax.set_ylabel("q-error")
    ax.set_title("layout sensitivity under sequential access")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_training_figure(log: Sequence[Mapping], path: str | Path) -> None:
    """Training loss and validation q90 per epoch."""
    if not log:
        return
    epochs = [e["epoch"] for e in log]
    fig, ax1 = plt.subplots(figsize=(7.0, 4.0))
    ax1.plot(epochs, [e["train_loss"] for e in log], color="tab:blue", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="tab:blue")
    ax2 = ax1.twinx()
    q90 = [_finite_or(e["val_q90"], float("nan")) for e in log]
    ax2.plot(epochs, q90, color="tab:red", label="val q90")
    ax2.set_yscale("log")
    ax2.set_ylabel("validation q90", color="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
