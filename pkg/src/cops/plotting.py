"""Report figures written next to the tabular outputs."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import METRIC_COLUMNS  # noqa: E402

RC = {
    "font.size": 8,
    "axes.titlesize": 8,
    "axes.labelsize": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
    "svg.hashsalt": "cops",
}


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    meta = {"Software": None} if path.endswith(".png") else None
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def plot_history(history, path):
    """Loss components per epoch; the shaded span marks the scale-invariant stage."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ep = np.array([r["epoch"] for r in history])
        for key, style in (("total", "k-"), ("gt", "C0-"), ("edge", "C1:"), ("si", "C2--"), ("contr", "C3--")):
            y = np.array([np.nan if r[key] is None else r[key] for r in history], dtype=float)
            if np.isfinite(y).any():
                ax.plot(ep, y, style, label=key, lw=1.2)
        stage = [r["epoch"] for r in history if r["beta"] == 1]
        if stage:
            ax.axvspan(min(stage) - 0.5, max(stage) + 0.5, color="0.9", zorder=0)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend(frameon=False, ncol=2)
        return _save(fig, path)


def plot_table(table, path, metric="RMSE"):
    """Grouped bars of one metric for each method and test condition."""
    col = METRIC_COLUMNS.index(metric)
    methods = table.methods()
    conds = []
    for _, c, _ in table.rows:
        if c not in conds:
            conds.append(c)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(3.5, 0.9 * len(methods) + 1.5), 3.0))
        width = 0.8 / max(len(conds), 1)
        x = np.arange(len(methods))
        for j, c in enumerate(conds):
            vals = []
            for m in methods:
                try:
                    vals.append(table.get(m, c)[col])
                except KeyError:
                    vals.append(np.nan)
            ax.bar(x + (j - (len(conds) - 1) / 2) * width, vals, width, label=c)
        ax.set_xticks(x)
        ax.set_xticklabels(methods, rotation=30, ha="right")
        unit = "m" if metric in ("RMSE", "MAE") else f"1/{table.inverse_unit}"
        ax.set_ylabel(f"{metric} ({unit})")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_scene(scene, pred, path):
    """Ground truth, sparse input, pseudo-depth, prediction and error panels."""
    gt = np.where(scene.gt.valid, scene.gt.depth, np.nan)
    sparse = np.where(scene.sparse.valid, scene.sparse.depth, np.nan)
    p = pred.depth
    err = np.where(scene.gt.valid, np.abs(p - scene.gt.depth), np.nan)
    lo, hi = np.nanmin(gt), np.nanmax(gt)
    panels = [("ground truth", gt), ("sparse", sparse), ("pseudo", scene.pseudo.depth),
              ("prediction", p), ("|error|", err)]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(panels), figsize=(2.0 * len(panels), 2.2))
        for ax, (title, img) in zip(axes, panels):
            if title == "|error|":
                im = ax.imshow(img, cmap="magma")
            else:
                im = ax.imshow(img, cmap="viridis_r", vmin=lo, vmax=hi)
            ax.set_title(title)
            ax.set_xticks([])
            ax.set_yticks([])
        fig.colorbar(im, ax=axes[-1], fraction=0.046)
        return _save(fig, path)
