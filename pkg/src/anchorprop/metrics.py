"""Temporal-consistency and editing-accuracy metrics with a pluggable embedder.

Tem-Con is the mean cosine similarity between embeddings of successive
frames; Frame-Acc is the fraction of frames whose embedding is strictly
closer to a target reference than to a source reference (ties fail).
The default embedder is a seeded random projection; precomputed embedding
matrices from an external embedder plug in through the *_from_embeddings
variants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import FrameFeatures
from .errors import ParameterError
from .tensorcore import cosine_sim


def _frame_array(frame) -> np.ndarray:
    if isinstance(frame, FrameFeatures):
        return frame.tokens
    return np.asarray(frame)


class RandomProjectionEmbedder:
    """Deterministic seeded random projection to a fixed output dimension.

    The projection matrix for each input size is derived from (seed,
    size), so one embedder instance handles frames of any shape while
    staying reproducible. The map is linear: rescaling the input
    rescales the embedding, leaving cosine similarities unchanged.
    """

    def __init__(self, seed: int = 0, out_dim: int = 64):
        self.seed = seed
        self.out_dim = out_dim
        self._matrices: dict[int, np.ndarray] = {}

    def _matrix(self, size: int) -> np.ndarray:
        if size not in self._matrices:
            rng = np.random.default_rng([self.seed, size])
            self._matrices[size] = rng.standard_normal((size, self.out_dim)) / np.sqrt(size)
        return self._matrices[size]

    def __call__(self, frame) -> np.ndarray:
        flat = _frame_array(frame).astype(np.float64).ravel()
        return flat @ self._matrix(flat.size)


def _frames_of(video) -> list:
    frames = list(video.frames) if hasattr(video, "frames") else list(video)
    return frames


def embed_video(video, embedder) -> np.ndarray:
    """(n_frames, out_dim) embedding matrix of a video."""
    frames = _frames_of(video)
    return np.stack([np.asarray(embedder(f), dtype=np.float64) for f in frames])


def pair_similarities_from_embeddings(embeddings: np.ndarray) -> list[float]:
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 2:
        raise ParameterError(f"need >= 2 frame embeddings, got shape {e.shape}")
    return [cosine_sim(e[t], e[t + 1]) for t in range(e.shape[0] - 1)]


def tem_con_from_embeddings(embeddings: np.ndarray) -> float:
    return float(np.mean(pair_similarities_from_embeddings(embeddings)))


def tem_con(video, embedder) -> float:
    """Mean cosine similarity across successive frame pairs."""
    frames = _frames_of(video)
    if len(frames) < 2:
        raise ParameterError(f"tem_con needs >= 2 frames, got {len(frames)}")
    return tem_con_from_embeddings(embed_video(frames, embedder))


def frame_acc_from_embeddings(
    embeddings: np.ndarray, source_ref: np.ndarray, target_ref: np.ndarray
) -> float:
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 1:
        raise ParameterError(f"need >= 1 frame embedding, got shape {e.shape}")
    hits = sum(
        1
        for row in e
        if cosine_sim(row, target_ref) > cosine_sim(row, source_ref)
    )
    return hits / e.shape[0]


def frame_acc(video, embedder, source_ref: np.ndarray, target_ref: np.ndarray) -> float:
    """Fraction of frames strictly closer to the target reference."""
    frames = _frames_of(video)
    if not frames:
        raise ParameterError("frame_acc needs a nonempty video")
    return frame_acc_from_embeddings(embed_video(frames, embedder), source_ref, target_ref)


@dataclass(frozen=True)
class MetricsReport:
    tem_con: float
    frame_acc: float | None
    pair_similarities: tuple[float, ...]
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "tem_con": self.tem_con,
            "frame_acc": self.frame_acc,
            "pair_similarities": list(self.pair_similarities),
            "provenance": self.provenance,
        }


def compute_metrics(
    video,
    embedder,
    source_ref: np.ndarray | None = None,
    target_ref: np.ndarray | None = None,
    provenance: dict | None = None,
) -> MetricsReport:
    """Full metrics report; Frame-Acc only when both references are given."""
    embeddings = embed_video(video, embedder)
    sims = pair_similarities_from_embeddings(embeddings)
    acc = None
    if source_ref is not None and target_ref is not None:
        acc = frame_acc_from_embeddings(embeddings, source_ref, target_ref)
    return MetricsReport(
        tem_con=float(np.mean(sims)),
        frame_acc=acc,
        pair_similarities=tuple(sims),
        provenance=provenance or {},
    )
