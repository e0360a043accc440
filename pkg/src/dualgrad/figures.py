"""Figure rendering for the report path.

Everything here draws to files (Agg backend, no display): bar charts of
the relative-difference tables, training-history curves, and
receptive-field grids.  The CLI writes these next to the CSV/text tables;
the data products themselves never depend on matplotlib.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import REGRESSION
from .experiment import HistoryPoint, ReportTables, receptive_field_variants
from .network import Network


def save_relative_difference_chart(tables: ReportTables, task: str, path) -> bool:
    """Grouped bars (clean vs noisy) per dataset/method for one task.
    Returns False when the tables hold no rows for that task."""
    rows = [r for r in tables.relative if r["task"] == task]
    if not rows:
        return False
    labels = [f"{r['dataset']}\n{r['method']}" for r in rows]
    clean = [r["clean"] if r["clean"] is not None else np.nan for r in rows]
    noisy = [r["noisy"] if r["noisy"] is not None else np.nan for r in rows]

    xs = np.arange(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(rows)), 4.0))
    ax.bar(xs - width / 2, clean, width, label="clean test")
    ax.bar(xs + width / 2, noisy, width, label="noisy test")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("improvement over gd baseline (%)")
    ax.set_title(f"{task} tasks: relative difference vs gradient descent")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def save_history_curves(histories: dict[str, list[HistoryPoint]], task: str, title: str, path) -> bool:
    """Test-metric curves over training iterations, one line per method."""
    histories = {k: v for k, v in histories.items() if v}
    if not histories:
        return False
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for label, points in sorted(histories.items()):
        its = [p.iteration for p in points]
        ax.plot(its, [p.clean for p in points], label=f"{label} (clean)")
        ax.plot(its, [p.noisy for p in points], linestyle="--", alpha=0.6, label=f"{label} (noisy)")
    ax.set_xlabel("iteration")
    ax.set_ylabel("test loss x 10k" if task == REGRESSION else "test accuracy (%)")
    if task == REGRESSION:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def save_receptive_field_grid(net: Network, layer_index: int, image_shape, path, max_neurons: int = 20) -> None:
    """All of a layer's weight rows as grayscale tiles, one grid row per
    weight variant (w, or w1/w2/diff for dual networks)."""
    h, w = (int(s) for s in image_shape)
    variants = receptive_field_variants(net, layer_index)
    n_neurons = min(max_neurons, net.layers[layer_index].out_size)

    fig, axes = plt.subplots(
        len(variants), n_neurons,
        figsize=(0.7 * n_neurons, 0.85 * len(variants)),
        squeeze=False,
    )
    for row, (variant, matrix) in enumerate(variants.items()):
        for col in range(n_neurons):
            ax = axes[row][col]
            ax.imshow(matrix[col].reshape(h, w), cmap="gray", interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if col == 0:
                ax.set_ylabel(variant, fontsize=8)
    fig.suptitle(f"layer {layer_index} receptive fields", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
