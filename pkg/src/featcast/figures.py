"""Figure rendering for the report path: every diagnostic CSV gets a plot.

All figures go straight to files through the Agg backend; nothing here opens
a window.  Saved PNGs carry no timestamps so reruns are byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Software": "featcast"}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def stability_histogram(bins: list[tuple[float, float, int]], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    if bins:
        lo = [b[0] for b in bins]
        width = [b[1] - b[0] for b in bins]
        counts = [b[2] for b in bins]
        ax.bar(lo, counts, width=width, align="edge", color="#4878a8", edgecolor="white")
    ax.set_xlabel("std / |mean| of a feature across windows")
    ax.set_ylabel("count")
    ax.set_title("Feature variability across windows")
    _finish(fig, path)


def training_curve(log: list[tuple[int, float, float]], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    epochs = [row[0] for row in log]
    ax.plot(epochs, [row[1] for row in log], color="#4878a8", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [row[2] for row in log], color="#d1605e", label="accuracy")
    ax2.set_ylabel("training accuracy")
    ax2.set_ylim(0, 1.05)
    ax.set_title("Classifier training")
    _finish(fig, path)


def elbow_curve(rows: list[tuple[int, float, float]], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ks = [r[0] for r in rows]
    ax.plot(ks, [r[1] for r in rows], marker="o", color="#4878a8")
    ax.set_xlabel("k")
    ax.set_ylabel("inertia", color="#4878a8")
    ax2 = ax.twinx()
    ax2.plot(ks, [r[2] for r in rows], marker="s", color="#d1605e")
    ax2.set_ylabel("silhouette", color="#d1605e")
    ax.set_title("Cluster count sweep")
    _finish(fig, path)


def projection_scatter(coords: np.ndarray, assignments: np.ndarray | None, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 6))
    if assignments is None:
        ax.scatter(coords[:, 0], coords[:, 1], s=14, color="#4878a8")
    else:
        ax.scatter(coords[:, 0], coords[:, 1], s=14, c=assignments, cmap="tab20")
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.set_title("Static features, 2-D projection")
    _finish(fig, path)


def cluster_profiles(means: np.ndarray, stds: np.ndarray, path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for ax, mat, title in ((axes[0], means, "cluster feature means"), (axes[1], stds, "cluster feature SDs")):
        im = ax.imshow(mat, aspect="auto", cmap="viridis")
        ax.set_xlabel("feature")
        ax.set_ylabel("cluster")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.046)
    _finish(fig, path)


def extreme_pairs(
    closest: tuple[str, np.ndarray, str, np.ndarray],
    farthest: tuple[str, np.ndarray, str, np.ndarray],
    path,
) -> None:
    fig, axes = plt.subplots(2, 1, figsize=(9, 6))
    for ax, (id_a, a, id_b, b), title in (
        (axes[0], closest, "most similar pair"),
        (axes[1], farthest, "least similar pair"),
    ):
        ax.plot(a, color="#4878a8", label=id_a)
        ax.plot(b, color="#d1605e", label=id_b)
        ax.legend(loc="upper right", fontsize=8)
        ax.set_title(title)
    _finish(fig, path)


def smape_summary(summary: list[tuple[str, float]], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    names = [s[0] for s in summary]
    values = [s[1] for s in summary]
    colors = ["#d1605e" if n == "combined" else "#4878a8" for n in names]
    ax.bar(names, values, color=colors)
    ax.set_ylabel("mean sMAPE")
    ax.set_title("Forecast accuracy by method")
    ax.tick_params(axis="x", rotation=30)
    _finish(fig, path)
