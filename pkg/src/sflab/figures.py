"""Report figures rendered next to the delimited output.

Each CLI command with a report path drops PNGs under <out>/figures/. The
figures read the same data the JSON/CSV carries (plus in-memory artifacts
such as learned filter curves), so they add nothing to, and never perturb,
the serialized results.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _figdir(out_dir) -> str:
    path = os.path.join(out_dir, "figures")
    os.makedirs(path, exist_ok=True)
    return path


def _grouped_bars(ax, table, value_key, group_key="filter", bar_key="basis"):
    groups = sorted({row[group_key] for row in table})
    bars = sorted({row[bar_key] for row in table})
    width = 0.8 / max(len(bars), 1)
    x = np.arange(len(groups))
    for j, b in enumerate(bars):
        vals = []
        for g in groups:
            match = [r[value_key] for r in table
                     if r[group_key] == g and r[bar_key] == b]
            v = match[0] if match and match[0] is not None else np.nan
            vals.append(v)
        ax.bar(x + j * width, vals, width=width, label=b)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels(groups)
    ax.legend(fontsize=8)


def save_slice_approx_figures(result, out_dir) -> list:
    figdir = _figdir(out_dir)
    fig, ax = plt.subplots(figsize=(7, 4))
    _grouped_bars(ax, result.table, "sse_mean")
    ax.set_yscale("log")
    ax.set_ylabel("sum of per-slice squared errors")
    ax.set_title("slice approximation error by target filter and basis")
    fig.tight_layout()
    path = os.path.join(figdir, "slice_sse.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def save_filter_learn_figures(result, out_dir) -> list:
    figdir = _figdir(out_dir)
    paths = []
    fig, ax = plt.subplots(figsize=(7, 4))
    _grouped_bars(ax, result.table, "metric_mean")
    ax.set_yscale("log")
    ax.set_ylabel("|| learned - target || over eigenvalues")
    ax.set_title("filter learning error by target filter and basis")
    fig.tight_layout()
    path = os.path.join(figdir, "filter_learn_metric.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    curves = result.artifacts.get("curves", {})
    by_filter = {}
    for (fid, basis), payload in curves.items():
        by_filter.setdefault(fid, []).append((basis, payload))
    for fid, entries in sorted(by_filter.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        lam, _, target = entries[0][1]
        order = np.argsort(lam)
        ax.plot(lam[order], target[order], "k-", lw=2, label="target")
        for basis, (lam_b, fit, _t) in sorted(entries):
            ax.plot(lam_b[order], fit[order], "--", lw=1, label=basis)
        ax.set_xlabel("eigenvalue")
        ax.set_ylabel("filter value")
        ax.set_title(f"learned filters on {fid} (first seed)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(figdir, f"filter_fit_{fid}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def save_bounds_figures(result, out_dir) -> list:
    figdir = _figdir(out_dir)
    reports = result.per_seed
    xi = np.array([max(d["xi"], 1e-300) for d in reports])
    rhs = np.array([max(d["r"] * d["epsilon_discrete_norm"] * d["norm_X"], 1e-300)
                    for d in reports])
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].loglog(xi, rhs, "o", ms=4, alpha=0.6)
    lim = [min(xi.min(), rhs.min()), max(xi.max(), rhs.max())]
    axes[0].loglog(lim, lim, "k--", lw=1)
    axes[0].set_xlabel("construction error")
    axes[0].set_ylabel("discrete-norm upper bound")
    axes[0].set_title("upper bound vs construction error")
    slack = [d["lemma1"]["lemma1_right_slack"] for d in reports]
    axes[1].hist(slack, bins=20)
    axes[1].set_xlabel("upper-bound slack on the slice sandwich")
    axes[1].set_title("sandwich right-side slack")
    fig.tight_layout()
    path = os.path.join(figdir, "bounds.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def save_train_figures(result, out_dir) -> list:
    figdir = _figdir(out_dir)
    paths = []
    history = result.artifacts.get("history", [])
    if history:
        fig, ax = plt.subplots(figsize=(6, 4))
        epochs = [h["epoch"] for h in history]
        ax.plot(epochs, [h["train_loss"] for h in history], label="train loss")
        ax2 = ax.twinx()
        ax2.plot(epochs, [h["val"] for h in history], "C1", label="val metric")
        ax.set_xlabel("epoch")
        ax.set_ylabel("train loss")
        ax2.set_ylabel("validation metric")
        ax.set_title("training curve (first run)")
        fig.tight_layout()
        path = os.path.join(figdir, "training_curve.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    accs = [r["test_acc"] for r in result.per_seed if r["test_acc"] is not None]
    if accs:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.hist(accs, bins=min(20, max(3, len(accs) // 3)))
        ax.set_xlabel("test accuracy")
        ax.set_title(f"test accuracy over {len(accs)} runs")
        fig.tight_layout()
        path = os.path.join(figdir, "test_accuracy.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


FIGURE_RENDERERS = {
    "slice-approx": save_slice_approx_figures,
    "filter-learn": save_filter_learn_figures,
    "verify-bounds": save_bounds_figures,
    "train": save_train_figures,
}


def render_figures(result, out_dir) -> list:
    renderer = FIGURE_RENDERERS.get(result.task)
    if renderer is None:
        return []
    return renderer(result, out_dir)
