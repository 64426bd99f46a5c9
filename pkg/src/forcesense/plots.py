"""Deterministic SVG figure export.

All figures render through the Agg backend with a fixed svg hash salt and no
date metadata, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import BinStat  # noqa: E402


def _new_figure(width=8.0, height=3.2):
    matplotlib.rcParams["svg.hashsalt"] = "forcesense"
    return plt.subplots(figsize=(width, height), dpi=100)


def _save(fig, path: str | Path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_prediction_vs_reference(path: str | Path, t, ref, pred) -> None:
    """Reference and predicted force over time, one line each."""
    fig, ax = _new_figure()
    ax.plot(t, ref, color="#444444", lw=1.4, label="reference")
    ax.plot(t, pred, color="#c0392b", lw=1.0, label="prediction")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("force (N)")
    ax.legend(loc="best", frameon=False)
    _save(fig, path)


def plot_bin_errors(path: str | Path, bins: list[BinStat]) -> None:
    """Per-magnitude-bin MAE bars with std whiskers; empty bins stay blank."""
    fig, ax = _new_figure(width=6.4)
    xs, heights, errs, labels = [], [], [], []
    for i, b in enumerate(bins):
        hi = "+" if b.hi == float("inf") else f"-{b.hi:g}"
        labels.append(f"{b.lo:g}{hi}")
        if b.count > 0:
            xs.append(i)
            heights.append(b.mae)
            errs.append(b.std)
    ax.bar(xs, heights, yerr=errs, width=0.7, color="#4a7fb5",
           error_kw={"elinewidth": 1.0, "capsize": 3})
    ax.set_xticks(range(len(bins)))
    ax.set_xticklabels(labels)
    ax.set_xlabel("reference force magnitude (N)")
    ax.set_ylabel("MAE (N)")
    _save(fig, path)


def plot_loss_curves(path: str | Path, history: list[dict]) -> None:
    """Train/val MSE vs epoch on a log scale."""
    fig, ax = _new_figure(width=6.4)
    epochs = [row["epoch"] for row in history]
    ax.semilogy(epochs, [row["train_mse"] for row in history],
                color="#444444", lw=1.2, label="train")
    ax.semilogy(epochs, [row["val_mse"] for row in history],
                color="#c0392b", lw=1.2, label="val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.legend(loc="best", frameon=False)
    _save(fig, path)
