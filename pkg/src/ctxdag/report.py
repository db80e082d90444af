"""Figure rendering for training logs and evaluation reports.

Figures are written as PNG files next to the delimited output. The Agg
backend is forced so rendering works headless, and PNG metadata is pinned
so reruns produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalReport, MethodResult, ThresholdPoint
from .notmad import EpochRecord

_PNG_METADATA = {"Software": "ctxdag"}
_DPI = 130


def _save(fig, path) -> None:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def training_curves_figure(records: list[EpochRecord], path) -> None:
    """Prediction loss and the acyclicity terms across epochs."""
    epochs = [r.epoch for r in records]
    fig, (ax_pred, ax_h) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax_pred.plot(epochs, [r.pred_loss for r in records], color="tab:blue")
    ax_pred.set_xlabel("epoch")
    ax_pred.set_ylabel("prediction loss")
    ax_pred.set_title("reconstruction")
    ax_h.plot(epochs, [r.mean_h for r in records], label="mean sample h", color="tab:orange")
    ax_h.plot(epochs, [r.arch_h for r in records], label="archetype h", color="tab:green")
    ax_h.plot(epochs, [r.arch_l1 for r in records], label="archetype L1", color="tab:red")
    ax_h.set_xlabel("epoch")
    ax_h.set_yscale("log")
    ax_h.set_title("penalty terms")
    ax_h.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def method_comparison_figure(methods: dict[str, MethodResult], path) -> None:
    """Held-out MSE per method with bootstrap standard-deviation bars."""
    names = list(methods)
    means = [methods[n].mse_mean for n in names]
    stds = [np.sqrt(methods[n].mse_var) for n in names]
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(names), 3.4))
    ax.bar(range(len(names)), means, yerr=stds, capsize=4, color="tab:blue")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("held-out MSE")
    fig.tight_layout()
    _save(fig, path)


def threshold_sweep_figure(sweeps: dict[str, list[ThresholdPoint]], path) -> None:
    """Precision, recall, and F1 against the magnitude cutoff."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for name, points in sweeps.items():
        thresholds = [pt.threshold for pt in points]
        ax.plot(thresholds, [pt.f1 for pt in points], marker="o", label=f"{name} F1")
        ax.plot(
            thresholds,
            [pt.precision for pt in points],
            linestyle="--",
            alpha=0.6,
            label=f"{name} precision",
        )
        ax.plot(
            thresholds,
            [pt.recall for pt in points],
            linestyle=":",
            alpha=0.6,
            label=f"{name} recall",
        )
    ax.set_xlabel("edge threshold")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def group_mse_figure(group_mse: dict[str, dict[int, float]], path) -> None:
    """Grouped bars of per-group held-out MSE for each method."""
    methods = list(group_mse)
    groups = sorted({g for values in group_mse.values() for g in values})
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(groups), 3.4))
    for index, method in enumerate(methods):
        offsets = [g_i + index * width for g_i in range(len(groups))]
        values = [group_mse[method].get(g, np.nan) for g in groups]
        ax.bar(offsets, values, width=width, label=method)
    ax.set_xticks([g_i + 0.4 - width / 2 for g_i in range(len(groups))])
    ax.set_xticklabels([str(g) for g in groups])
    ax.set_xlabel("group")
    ax.set_ylabel("held-out MSE")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def render_report_figures(report: EvalReport, directory) -> list[str]:
    """Write the figures a report supports; returns the file names written."""
    import os

    written = []
    if report.methods:
        path = os.path.join(directory, "mse_comparison.png")
        method_comparison_figure(report.methods, path)
        written.append("mse_comparison.png")
    if report.structure:
        path = os.path.join(directory, "threshold_sweep.png")
        threshold_sweep_figure(report.structure, path)
        written.append("threshold_sweep.png")
    if report.group_mse:
        path = os.path.join(directory, "group_mse.png")
        group_mse_figure(report.group_mse, path)
        written.append("group_mse.png")
    return written
