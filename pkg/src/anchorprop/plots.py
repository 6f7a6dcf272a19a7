"""Figure rendering for the report-producing CLI paths.

Each renderer takes the same rows the delimited output is written from
and saves a PNG next to it. Matplotlib runs on the Agg backend so the
CLI works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def render_tracking_figure(rows: list[dict], path: str | Path) -> Path:
    """Accuracy vs layer, one line per (step, threshold)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series: dict[tuple, list[tuple[int, float]]] = {}
    for row in rows:
        series.setdefault((row["step"], row["delta"]), []).append(
            (row["layer"], row["accuracy"])
        )
    for (step, delta), pts in sorted(series.items()):
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label=f"step {step}, $\\delta$={delta:g}",
        )
    ax.set_xlabel("attention layer")
    ax.set_ylabel("position accuracy")
    ax.set_ylim(-0.02, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_bench_figure(rows: list[dict], path: str | Path) -> Path:
    """Throughput vs worker count."""
    fig, ax = plt.subplots(figsize=(6, 4))
    workers = [r["workers"] for r in rows]
    fps = [r["frames_per_sec"] for r in rows]
    ax.plot(workers, fps, marker="s")
    ax.set_xlabel("workers")
    ax.set_ylabel("frames / s")
    ax.set_xticks(workers)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_similarity_figure(pair_similarities, path: str | Path) -> Path:
    """Adjacent-frame similarity across the video."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(pair_similarities)), list(pair_similarities), marker="o")
    ax.set_xlabel("frame pair")
    ax.set_ylabel("cosine similarity")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
