"""PNG figures written next to the CSV/JSON reports."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def similarity_scatter(pairs, path, title="2D similarity vs 3D combo"):
    """Scatter of (sim2d, combo3d) pairs, annotated with Pearson r."""
    x = np.array([p["sim2d"] for p in pairs if p["combo3d"] is not None], float)
    y = np.array([p["combo3d"] for p in pairs if p["combo3d"] is not None], float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(x, y, s=8, alpha=0.6)
    ax.axhline(1.2, color="grey", lw=0.8, ls="--")
    if x.size > 1 and x.std() > 0 and y.std() > 0:
        r = np.corrcoef(x, y)[0, 1]
        ax.text(0.02, 0.95, f"Pearson r = {r:.3f}", transform=ax.transAxes, va="top")
    ax.set_xlabel("Tanimoto (circular fingerprint)")
    ax.set_ylabel("TanimotoCombo")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 2)
    ax.set_title(title)
    return _save(fig, path)


def similarity_histogram(values, path, title="Top-1 2D similarity"):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    values = np.asarray(values, float)
    ax.hist(values, bins=np.linspace(0, 1, 21), color="tab:blue", edgecolor="white")
    if values.size:
        ax.axvline(np.median(values), color="k", lw=1, label=f"median {np.median(values):.2f}")
        ax.legend()
    ax.set_xlabel("Tanimoto to nearest library entry")
    ax.set_ylabel("generated molecules")
    ax.set_title(title)
    return _save(fig, path)


def metric_bars(rows, path, title="Per-query metrics"):
    """Hits and unique-scaffold hits per query."""
    fig, ax = plt.subplots(figsize=(max(4, 0.4 * len(rows) + 2), 3.5))
    idx = np.arange(len(rows))
    ax.bar(idx - 0.2, [r["hits"] for r in rows], width=0.4, label="hits")
    ax.bar(idx + 0.2, [r["unique_scaffold_hits"] for r in rows], width=0.4, label="unique scaffold hits")
    ax.set_xticks(idx)
    ax.set_xticklabels([str(r["query_id"]) for r in rows], rotation=60, ha="right", fontsize=7)
    ax.legend()
    ax.set_title(title)
    return _save(fig, path)


def loss_curves(history, path):
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(epochs, [h["train_loss"] for h in history], label="train")
    val = [(h["epoch"], h["val_loss"]) for h in history if h.get("val_loss") is not None]
    if val:
        ax.plot(*zip(*val), label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("NLL per sequence")
    ax.legend()
    return _save(fig, path)


def report_figures(report, out_dir, prefix=None):
    """Figures appropriate to a report kind; returns written paths."""
    prefix = prefix or report["kind"]
    out = {}
    if report["rows"]:
        out["metrics"] = metric_bars(report["rows"], os.path.join(out_dir, f"{prefix}_metrics.png"))
    if report.get("pairs"):
        out["scatter"] = similarity_scatter(report["pairs"], os.path.join(out_dir, f"{prefix}_sim_vs_combo.png"))
        firsts = {}
        for p in report["pairs"]:
            firsts.setdefault(p["generated_id"], p["sim2d"])
        out["histogram"] = similarity_histogram(list(firsts.values()), os.path.join(out_dir, f"{prefix}_top1_sim.png"))
    return out
