"""Figures for a bootstrap report, written as PNG files with fixed metadata."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import BootstrapReport  # noqa: E402

_META = {"Software": "oodrank"}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name).strip("_").lower()


def pair_scatter(report: BootstrapReport, method: str, reference: str, path: Path) -> Path:
    """Per-pair accuracy of ``method`` against ``reference`` with the y = x line."""
    x, y = report.pairwise(reference), report.pairwise(method)
    gap = np.array([abs(report.s[i] - report.s[j]) for i, j in report.pairs])
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    sc = ax.scatter(x, y, c=gap, cmap="viridis", vmin=0, vmax=1, s=28)
    ax.plot([0, 1], [0, 1], color="grey", lw=0.8, ls="--")
    ax.set(xlim=(-0.02, 1.02), ylim=(-0.02, 1.02), xlabel=f"{reference} pairwise accuracy",
           ylabel=f"{method} pairwise accuracy", title=report.name)
    fig.colorbar(sc, ax=ax, label="|s_i - s_j|")
    fig.tight_layout()
    return _save(fig, path)


def accuracy_histogram(report: BootstrapReport, path: Path) -> Path:
    """Distribution of pairwise accuracies for every method."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bins = np.linspace(0, 1, 21)
    for m in report.methods:
        ax.hist(report.pairwise(m), bins=bins, histtype="step", lw=1.4, label=m)
    ax.set(xlabel="pairwise accuracy", ylabel="pairs", title=report.name)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def mean_vs_s(report: BootstrapReport, method: str, path: Path) -> Path:
    """Population-mean method score of every model against its OOD accuracy."""
    means = report.population_means.get(method)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.scatter(report.s, means, s=30)
    for label, x, y in zip(report.models, report.s, means):
        ax.annotate(label, (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set(xlabel="OOD accuracy s", ylabel=f"mean {method}", title=report.name)
    fig.tight_layout()
    return _save(fig, path)


def render_all(report: BootstrapReport, out_dir: str | Path, reference: str = "ACC") -> list[Path]:
    out_dir = Path(out_dir)
    paths = [accuracy_histogram(report, out_dir / "pairwise_hist.png")]
    for m in report.methods:
        if m != reference and reference in report.methods:
            paths.append(pair_scatter(report, m, reference, out_dir / f"scatter_{_slug(m)}.png"))
        if report.population_means.get(m) is not None:
            paths.append(mean_vs_s(report, m, out_dir / f"mean_vs_s_{_slug(m)}.png"))
    return paths
