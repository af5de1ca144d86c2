"""Figures for the CLI report commands.

Uses the non-interactive Agg backend and writes PNGs without timestamps,
so the same data gives the same file.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "savefig.facecolor": "white",
    "image.cmap": "viridis",
}

POSITIVE = "#2b8cbe"
NEGATIVE = "#e34a33"


def _save(fig, path):
    # no Software/date metadata keeps PNGs reproducible
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def heatmap(path, grid, row_labels, col_labels, title, xlabel="JS threshold", ylabel="entropy retain quantile",
            fmt="{:.2f}"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(0.7 * len(col_labels) + 2.0, 0.5 * len(row_labels) + 1.5))
        im = ax.imshow(np.asarray(grid, dtype=float), origin="lower", aspect="auto")
        ax.set_xticks(range(len(col_labels)), [f"{v:g}" for v in col_labels])
        ax.set_yticks(range(len(row_labels)), [f"{v:g}" for v in row_labels])
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        lo, hi = np.nanmin(grid), np.nanmax(grid)
        mid = 0.5 * (lo + hi)
        for i in range(len(row_labels)):
            for j in range(len(col_labels)):
                v = grid[i][j]
                ax.text(j, i, fmt.format(v), ha="center", va="center", fontsize=7,
                        color="black" if v > mid else "white")
        fig.colorbar(im, ax=ax)
        return _save(fig, path)


def entropy_histogram(path, rows, xlabel="normalized entropy"):
    lo = np.array([r["bin_lo"] for r in rows])
    hi = np.array([r["bin_hi"] for r in rows])
    width = hi - lo
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.bar(lo, [r["positive"] for r in rows], width=width, align="edge", color=POSITIVE, alpha=0.7,
               label="positive clips")
        ax.bar(lo, [r["negative"] for r in rows], width=width, align="edge", color=NEGATIVE, alpha=0.6,
               label="negative clips")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("clips")
        ax.legend()
        return _save(fig, path)


def per_class_bars(path, rows, top=10):
    """Classes needing the most and the fewest clips, side by side."""
    most = rows[:top]
    least = rows[-top:] if len(rows) > top else []
    with plt.rc_context(STYLE):
        ncols = 2 if least else 1
        fig, axes = plt.subplots(1, ncols, figsize=(4 * ncols, 3), squeeze=False)
        for ax, part, title in zip(axes[0], [most, least], ["most clips", "fewest clips"]):
            names = [r["class_name"] for r in part]
            ax.barh(range(len(part)), [r["mean_selected"] for r in part], color=POSITIVE)
            ax.set_yticks(range(len(part)), names)
            ax.invert_yaxis()
            ax.set_xlabel("mean selected clips")
            ax.set_title(title)
        return _save(fig, path)


def correlation_scatter(path, rows, r):
    centres = [0.5 * (b["bin_lo"] + b["bin_hi"]) for b in rows if b["videos"]]
    rates = [b["correct_rate"] for b in rows if b["videos"]]
    sizes = [12 + 6 * b["videos"] for b in rows if b["videos"]]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.scatter(centres, rates, s=sizes, color=POSITIVE)
        ax.set_xlim(0, 1)
        ax.set_ylim(-0.05, 1.05)
        ax.set_xlabel("fraction of positive clips")
        ax.set_ylabel("videos correct")
        ax.set_title(f"Pearson r = {r:.3f}")
        return _save(fig, path)
