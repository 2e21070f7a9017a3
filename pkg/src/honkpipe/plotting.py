"""Figure rendering for the CLI (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CLASS_COLORS = {"LWV": "#1b9e77", "MWV": "#d95f02", "HWV": "#7570b3"}


def figure_defaults():
    plt.rcParams.update({
        "font.size": 10,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "savefig.dpi": 120,
        "savefig.bbox": "tight",
        # fixed metadata keeps repeated renders byte-stable
        "svg.hashsalt": "honkpipe",
    })


def _save(fig, path):
    meta = {"Software": None} if str(path).endswith(".png") else {"Date": None}
    fig.savefig(path, metadata=meta)
    plt.close(fig)


def plot_kde(curves: dict, path, title: str = "SPL distribution"):
    """``curves`` maps a label to ``(xs, density)``."""
    figure_defaults()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for name, (xs, ys) in curves.items():
        ax.plot(xs, ys, label=name, color=CLASS_COLORS.get(name))
        ax.fill_between(xs, ys, alpha=0.15, color=CLASS_COLORS.get(name))
    ax.set_xlabel("SPL (dB)")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_grouped_counts(groups: dict, path, title: str = "Honks per slot"):
    """``groups`` maps a slot/segment name to ``{"LWV": n, "MWV": n, "HWV": n}``."""
    figure_defaults()
    names = list(groups)
    classes = ["LWV", "MWV", "HWV"]
    x = np.arange(len(names))
    width = 0.8 / len(classes)
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 3.2))
    for i, c in enumerate(classes):
        ax.bar(x + (i - 1) * width, [groups[n].get(c, 0) for n in names], width,
               label=c, color=CLASS_COLORS[c])
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("honk count")
    ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_confusion(counts, path, title: str = "Confusion matrix",
                   labels=("non-honk", "LWV", "MWV", "HWV")):
    figure_defaults()
    cm = np.asarray(counts)
    fig, ax = plt.subplots(figsize=(4, 3.6))
    ax.grid(False)
    im = ax.imshow(cm, cmap="Blues")
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, int(cm[i, j]), ha="center", va="center",
                    color="white" if cm[i, j] > cm.max() / 2 else "black")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, path)


def plot_history(histories: dict, path, key: str = "accuracy"):
    figure_defaults()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for name, hist in histories.items():
        ax.plot([h["epoch"] for h in hist], [h[key] for h in hist], marker="o", ms=3, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel(key)
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)


def plot_correlation(counts, spl, r: float, path, title: str = "Honk count vs SPL"):
    figure_defaults()
    fig, ax = plt.subplots(figsize=(4, 3.2))
    ax.scatter(counts, spl, s=14)
    if len(set(counts)) > 1:
        k, b = np.polyfit(counts, spl, 1)
        xs = np.linspace(min(counts), max(counts), 10)
        ax.plot(xs, k * xs + b, color="k", lw=1)
    ax.set_xlabel("honks per interval")
    ax.set_ylabel("mean SPL (dB)")
    ax.set_title(f"{title} (r = {r:.2f})")
    _save(fig, path)
