"""Report figures rendered to files next to the delimited outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_training_curves(report, path) -> None:
    """Loss, validation scores, and learning rate against the epoch index."""
    epochs = [e.epoch for e in report.epochs]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    (ax_loss, ax_cider), (ax_bleu, ax_lr) = axes

    ax_loss.plot(epochs, [e.train_loss for e in report.epochs], color="tab:blue")
    ax_loss.set_ylabel("train loss / token")

    evaluated = [e for e in report.epochs if not math.isnan(e.val_cider)]
    ax_cider.plot(
        [e.epoch for e in evaluated],
        [e.val_cider for e in evaluated],
        color="tab:green",
        marker="o",
        markersize=3,
    )
    ax_cider.set_ylabel("val CIDEr")

    ax_bleu.plot(
        [e.epoch for e in evaluated],
        [e.val_bleu4 for e in evaluated],
        color="tab:orange",
        marker="o",
        markersize=3,
    )
    ax_bleu.set_ylabel("val BLEU-4")
    ax_bleu.set_xlabel("epoch")

    ax_lr.plot(epochs, [e.lr for e in report.epochs], color="tab:red")
    ax_lr.set_ylabel("learning rate")
    ax_lr.set_xlabel("epoch")

    if report.best_epoch >= 0:
        ax_cider.axvline(report.best_epoch, color="gray", linestyle=":", linewidth=1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_metric_bars(report: dict, path) -> None:
    """BLEU bars on the unit scale; CIDEr on its own 0..10 panel."""
    bleu_items = [(k, v) for k, v in report.items() if k.startswith("BLEU-")]
    fig, (ax_bleu, ax_cider) = plt.subplots(1, 2, figsize=(8, 3.5))
    ax_bleu.bar(
        [k for k, _ in bleu_items],
        [v for _, v in bleu_items],
        color="tab:blue",
    )
    ax_bleu.set_ylim(0, 1)
    ax_bleu.set_title("BLEU")
    ax_cider.bar(["CIDEr"], [report.get("CIDEr", 0.0)], color="tab:green")
    ax_cider.set_ylim(0, 10)
    ax_cider.set_title("CIDEr (0-10)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
