"""Point correspondence from attention maps and position-accuracy evaluation.

A query pixel in a source frame maps to a token; the attention-map row of
that token, computed against a target frame's keys, is read as a soft
correspondence, and its argmax names the predicted target token. Accuracy
is the fraction of tracked points within a pixel threshold of ground
truth, evaluated on synthetic clips whose motion is known exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import AttentionMap, head_avg_attention_map
from .errors import BoundsError, ParameterError, ShapeError
from .propagation import ToyEditNetwork, record_sites
from .synthdata import SyntheticClip


@dataclass(frozen=True)
class TrackQuery:
    point: tuple[float, float]
    source_frame: int
    target_frame: int


@dataclass(frozen=True)
class TrackResult:
    point: tuple[float, float]
    token_index: int
    score: float


@dataclass(frozen=True)
class EvalConfig:
    """Protocol knobs for the tracking evaluation.

    Queries form a uniform query_grid x query_grid grid of pixel centers;
    frame pairs are (t, t + s) for every stride s in pair_strides. layers
    and steps of None mean all layers and three representative steps
    (first, middle, last).
    """

    image_size: int = 256
    thresholds: tuple[float, ...] = (16.0, 32.0)
    layers: tuple[int, ...] | None = None
    steps: tuple[int, ...] | None = None
    query_grid: int = 16
    pair_strides: tuple[int, ...] = (1, 4)

    def __post_init__(self) -> None:
        if any(t <= 0 for t in self.thresholds):
            raise ParameterError(f"thresholds must be positive: {self.thresholds}")
        if self.query_grid < 1:
            raise ParameterError(f"query_grid must be >= 1, got {self.query_grid}")


def track_point(
    query: TrackQuery,
    amap: AttentionMap,
    grid: tuple[int, int],
    image_size: int,
) -> TrackResult:
    """Argmax correspondence for one query pixel.

    Pixel -> token uses floor(x / stride); the result pixel is the center
    of the winning token. Argmax ties break toward the lowest flat index.
    """
    h, w = grid
    if amap.scores.shape[0] != h * w:
        raise ShapeError(f"map has {amap.scores.shape[0]} rows, grid is {h}x{w}")
    x, y = query.point
    if not (0 <= x < image_size and 0 <= y < image_size):
        raise BoundsError(f"query point {query.point} outside image of size {image_size}")
    stride_x = image_size / w
    stride_y = image_size / h
    tx = int(x // stride_x)
    ty = int(y // stride_y)
    row = amap.scores[ty * w + tx]
    token = int(np.argmax(row))
    px = (token % w + 0.5) * stride_x
    py = (token // w + 0.5) * stride_y
    return TrackResult(point=(px, py), token_index=token, score=float(row[token]))


def position_accuracy(predictions, delta: float) -> float:
    """Fraction of (predicted, ground truth) pixel pairs within delta."""
    predictions = list(predictions)
    if not predictions:
        raise ParameterError("position_accuracy needs at least one prediction")
    if delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    hits = 0
    for pred, truth in predictions:
        if math.hypot(pred[0] - truth[0], pred[1] - truth[1]) <= delta:
            hits += 1
    return hits / len(predictions)


def _default_steps(network: ToyEditNetwork) -> tuple[int, ...]:
    last = network.steps - 1
    return tuple(sorted({0, last // 2, last}))


def evaluate_tracking(
    clip: SyntheticClip,
    network: ToyEditNetwork,
    cfg: EvalConfig = EvalConfig(),
) -> list[dict]:
    """Accuracy table over (layer, step, threshold).

    Each frame runs the network independently; at every evaluated site
    the head-averaged attention map between the two frames of a pair is
    used to track the query grid, and predictions are scored against the
    clip's exact motion maps. Returns one row dict per table cell.
    """
    if clip.n_frames < 2:
        raise ParameterError("tracking needs at least 2 frames")
    layer_ids = tuple(cfg.layers) if cfg.layers is not None else tuple(range(len(network.layers)))
    step_ids = tuple(cfg.steps) if cfg.steps is not None else _default_steps(network)
    for li in layer_ids:
        if not 0 <= li < len(network.layers):
            raise ParameterError(f"layer index {li} out of range")
        if cfg.image_size % network.layers[li].grid != 0:
            raise ParameterError(
                f"image_size {cfg.image_size} not divisible by layer {li} grid "
                f"{network.layers[li].grid}"
            )
    for t in step_ids:
        if not 0 <= t < network.steps:
            raise ParameterError(f"step index {t} out of range")
    sites = {(li, t) for li in layer_ids for t in step_ids}

    recordings = [record_sites(f, network, sites=sites) for f in clip.frames]

    pairs = []
    for stride in cfg.pair_strides:
        pairs.extend((t, t + stride) for t in range(clip.n_frames - stride))
    if not pairs:
        raise ParameterError("no frame pairs to evaluate")

    size = cfg.image_size
    qstride = size / cfg.query_grid
    queries = [
        ((ix + 0.5) * qstride, (iy + 0.5) * qstride)
        for iy in range(cfg.query_grid)
        for ix in range(cfg.query_grid)
    ]

    gt = {}
    for t, tp in pairs:
        dense, valid = clip.forward_map(t, tp)
        gt[(t, tp)] = (dense, valid)

    att_cfg = network.attention_config
    rows = []
    for li in layer_ids:
        g = network.layers[li].grid
        for step in step_ids:
            dists = []
            for t, tp in pairs:
                amap = head_avg_attention_map(
                    recordings[t][(li, step)], recordings[tp][(li, step)], att_cfg
                )
                dense, valid = gt[(t, tp)]
                for qx, qy in queries:
                    ix, iy = int(qx), int(qy)
                    if not valid[iy, ix]:
                        continue
                    res = track_point(
                        TrackQuery((qx, qy), t, tp), amap, (g, g), size
                    )
                    tx, ty = dense[iy, ix]
                    dists.append(math.hypot(res.point[0] - tx, res.point[1] - ty))
            for delta in cfg.thresholds:
                acc = (
                    sum(1 for d in dists if d <= delta) / len(dists) if dists else 0.0
                )
                rows.append(
                    {
                        "layer": li,
                        "step": step,
                        "delta": delta,
                        "accuracy": acc,
                        "n_points": len(dists),
                    }
                )
    return rows


def write_tracking_csv(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["layer", "step", "delta", "accuracy", "n_points"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path
