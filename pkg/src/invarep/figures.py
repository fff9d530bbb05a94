"""Report figures, rendered headless to files next to the delimited
outputs.  Every plot is a pure function of its inputs; no timestamps or
run-dependent annotations."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import ADVERSARY_DEPTHS
from .objectives import LossBreakdown


def training_figure(history, path) -> None:
    """Loss components and the validation metric across epochs."""
    epochs = [row["epoch"] for row in history]
    fig, (ax_loss, ax_val) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for name in LossBreakdown.FIELDS:
        values = [row[name] for row in history]
        if name != "total" and not any(v != 0.0 for v in values):
            continue
        ax_loss.plot(epochs, values, label=name)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(fontsize=8)
    ax_val.plot(epochs, [row["val_metric"] for row in history], color="tab:green")
    ax_val.set_xlabel("epoch")
    ax_val.set_ylabel("validation metric")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ladder_figure(report, path) -> None:
    """Adversary accuracy against depth, with the majority baseline."""
    depths = list(ADVERSARY_DEPTHS)
    accs = [report.adv_accuracy[d] for d in depths]
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    ax.plot(depths, accs, marker="o", label="adversary")
    ax.axhline(report.majority_covariate, linestyle="--", color="gray",
               label="majority c")
    if report.pred_accuracy is not None:
        ax.axhline(report.pred_accuracy, linestyle=":", color="tab:green",
                   label="pred y")
    ax.set_xticks(depths)
    ax.set_xlabel("adversary hidden layers")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"{report.dataset} / {report.objective}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def sweep_figure(reports, path) -> None:
    """Prediction and deepest-adversary accuracy as lambda varies.
    Reports sharing a lambda (seed repeats) are averaged."""
    lams = sorted({r.lam for r in reports})
    def mean_over(lam, pick):
        vals = [pick(r) for r in reports if r.lam == lam and pick(r) is not None]
        return float(np.mean(vals)) if vals else np.nan

    adv = [mean_over(l, lambda r: r.adv_accuracy[max(ADVERSARY_DEPTHS)]) for l in lams]
    pred = [mean_over(l, lambda r: r.pred_accuracy) for l in lams]
    pos = np.arange(len(lams))
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    ax.plot(pos, adv, marker="o", label="adversary (deepest)")
    if not all(np.isnan(v) for v in pred):
        ax.plot(pos, pred, marker="s", label="prediction")
    ax.axhline(mean_over(lams[0], lambda r: r.majority_covariate),
               linestyle="--", color="gray", label="majority c")
    ax.set_xticks(pos)
    ax.set_xticklabels([("%g" % l) for l in lams])
    ax.set_xlabel("lambda")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def transfer_figure(grid, path) -> None:
    """The style-transfer grid as a PNG mirror of the PGM output."""
    fig, ax = plt.subplots(figsize=(grid.shape[1] / 28.0, grid.shape[0] / 28.0))
    ax.imshow(grid, cmap="gray", vmin=0, vmax=255, interpolation="nearest")
    ax.set_axis_off()
    fig.subplots_adjust(left=0, right=1, top=1, bottom=0)
    fig.savefig(path, dpi=120)
    plt.close(fig)
