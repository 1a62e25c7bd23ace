"""Figures written next to the tab-separated reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_training_curves(history, path) -> Path:
    epochs = [e.epoch for e in history]
    with plt.rc_context(RC):
        fig, (ax_loss, ax_rec) = plt.subplots(1, 2, figsize=(7.5, 2.8))
        ax_loss.plot(epochs, [e.L_M for e in history], label="matching")
        ax_loss.plot(epochs, [e.L_G for e in history], label="generation")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("mean batch loss")
        ax_loss.legend(frameon=False)
        ax_rec.plot(epochs, [e.train_caption_r1 for e in history], label="train caption R@1")
        ax_rec.plot(epochs, [e.train_image_r1 for e in history], label="train image R@1")
        ax_rec.plot(epochs, [e.val_rsum / 6 for e in history], label="val rsum / 6")
        ax_rec.set_ylim(0, 1.02)
        ax_rec.set_xlabel("epoch")
        ax_rec.legend(frameon=False)
        return _save(fig, path)


def plot_report(report, path, title: str = "") -> Path:
    ks = ["R@1", "R@5", "R@10"]
    cap = [report.caption_r1, report.caption_r5, report.caption_r10]
    img = [report.image_r1, report.image_r5, report.image_r10]
    x = np.arange(3)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 2.8))
        ax.bar(x - 0.2, cap, width=0.4, label="caption retrieval")
        ax.bar(x + 0.2, img, width=0.4, label="image retrieval")
        ax.set_xticks(x, ks)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("recall")
        ax.set_title(title or f"rsum {report.rsum:.3f}")
        ax.legend(frameon=False, loc="lower right")
        return _save(fig, path)


def plot_attention(amap, boxes, path) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.2, 3.2))
        ax.imshow(amap.scores, cmap="inferno", interpolation="nearest")
        for x, y, w, h in np.asarray(boxes).reshape(-1, 4):
            ax.add_patch(plt.Rectangle((x - 0.5, y - 0.5), w, h, fill=False, lw=0.6, ec="w"))
        ax.set_axis_off()
        return _save(fig, path)
