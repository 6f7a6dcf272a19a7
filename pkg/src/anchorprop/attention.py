"""Multi-head self-attention and cross-frame attention over token grids.

A frame is a grid of feature tokens. Cross-frame attention lets one frame's
queries attend over keys/values concatenated from several frames, which is
the mechanism the rest of the package builds on: the post-softmax score
matrix doubles as a soft correspondence estimate between token grids.

Key/value concatenation order is fixed (own rows first, then provided
frames in list order) so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyContextError, ShapeError
from .tensorcore import DTYPE, _softmax_rows_unchecked, as_matrix


@dataclass(frozen=True)
class AttentionConfig:
    """Head layout and softmax temperature for one attention site.

    `temperature` defaults to sqrt(head_dim), the standard multi-head
    scaling of query-key dot products.
    """

    num_heads: int
    dim: int
    temperature: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.num_heads < 1:
            raise ShapeError(f"num_heads must be >= 1, got {self.num_heads}")
        if self.dim % self.num_heads != 0:
            raise ShapeError(f"dim {self.dim} not divisible by num_heads {self.num_heads}")
        if self.temperature == 0.0:
            object.__setattr__(self, "temperature", math.sqrt(self.head_dim))
        if not self.temperature > 0:
            raise ShapeError(f"temperature must be positive, got {self.temperature}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.num_heads


@dataclass(frozen=True)
class FrameFeatures:
    """Token grid of one frame: (grid_h * grid_w, dim) float32 features."""

    frame_index: int
    grid_h: int
    grid_w: int
    tokens: np.ndarray

    def __post_init__(self) -> None:
        tokens = as_matrix(self.tokens, "tokens")
        if tokens.shape[0] != self.grid_h * self.grid_w:
            raise ShapeError(
                f"token count {tokens.shape[0]} != grid {self.grid_h}x{self.grid_w}"
            )
        object.__setattr__(self, "tokens", tokens)

    @property
    def dim(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def n_tokens(self) -> int:
        return int(self.tokens.shape[0])


@dataclass(frozen=True)
class QKV:
    """Projected queries/keys/values, each (n_tokens, dim)."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        q = as_matrix(self.q, "q")
        k = as_matrix(self.k, "k")
        v = as_matrix(self.v, "v")
        if not (q.shape == k.shape == v.shape):
            raise ShapeError(f"q/k/v shapes differ: {q.shape}, {k.shape}, {v.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return int(self.q.shape[1])


@dataclass(frozen=True)
class AttentionMap:
    """Head-averaged, row-stochastic score matrix (n_query, n_key)."""

    scores: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", as_matrix(self.scores, "scores"))


def project_qkv(frame: FrameFeatures, layer_weights) -> QKV:
    """Project frame tokens through a (Wq, Wk, Wv) triple of dim x dim matrices."""
    wq, wk, wv = layer_weights
    tokens64 = frame.tokens.astype(np.float64)
    out = []
    for name, w in (("Wq", wq), ("Wk", wk), ("Wv", wv)):
        w = as_matrix(w, name)
        if w.shape[0] != frame.dim:
            raise ShapeError(f"{name} rows {w.shape[0]} != token dim {frame.dim}")
        out.append((tokens64 @ w.astype(np.float64)).astype(DTYPE))
    return QKV(*out)


def attend(q: np.ndarray, k: np.ndarray, v: np.ndarray, cfg: AttentionConfig) -> np.ndarray:
    """Multi-head attention of q over an arbitrary key/value context.

    q is (n, dim); k and v are (m, dim) with the same m. Per head h:
    softmax(Q_h K_h^T / temperature) V_h, heads concatenated back along
    the feature axis. Scores and attention-weighted values accumulate in
    float32 (softmax row sums in 64-bit); this is the throughput-critical
    kernel and the precision is part of its documented contract.
    """
    if q.shape[1] != cfg.dim or k.shape[1] != cfg.dim or v.shape[1] != cfg.dim:
        raise ShapeError(f"q/k/v dim != config dim {cfg.dim}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"key rows {k.shape[0]} != value rows {v.shape[0]}")
    if k.shape[0] == 0:
        raise EmptyContextError("attention over an empty key set")
    return _attend_heads(q, _to_heads(k, cfg), _to_heads(v, cfg), cfg)


def _to_heads(m2d: np.ndarray, cfg: AttentionConfig) -> np.ndarray:
    """(m, dim) -> contiguous (heads, m, head_dim)."""
    m = m2d.shape[0]
    return np.ascontiguousarray(
        m2d.reshape(m, cfg.num_heads, cfg.head_dim).transpose(1, 0, 2)
    )


def _attend_heads(q: np.ndarray, k3: np.ndarray, v3: np.ndarray, cfg: AttentionConfig) -> np.ndarray:
    """Attention of 2-D queries over per-head key/value stacks.

    k3 and v3 are (heads, m, head_dim); temperature is folded into the
    queries before the score product so the wide score matrix needs one
    fewer pass.
    """
    n = q.shape[0]
    heads, hd = cfg.num_heads, cfg.head_dim
    # allocating multiply: the transposed view may alias the caller's q
    q3 = q.reshape(n, heads, hd).transpose(1, 0, 2) * DTYPE(1.0 / cfg.temperature)
    s = np.matmul(q3, k3.transpose(0, 2, 1))
    np.subtract(s, s.max(axis=-1, keepdims=True), out=s)
    np.exp(s, out=s)
    denom = s.sum(axis=-1, keepdims=True, dtype=np.float64)
    out = np.matmul(s, v3)
    out *= (1.0 / denom).astype(DTYPE)
    return np.ascontiguousarray(out.transpose(1, 0, 2)).reshape(n, cfg.dim)


def _attend_heads_pair(
    q: np.ndarray,
    k3a: np.ndarray,
    v3a: np.ndarray,
    k3b: np.ndarray,
    v3b: np.ndarray,
    cfg: AttentionConfig,
) -> np.ndarray:
    """Attention over the concatenation of two key/value blocks.

    Mathematically softmax(q [Ka, Kb]^T)[Va, Vb] with the max and the
    64-bit normalizer taken over the union; computing the blocks
    separately avoids materializing the concatenated context for every
    query frame.
    """
    n = q.shape[0]
    heads, hd = cfg.num_heads, cfg.head_dim
    q3 = q.reshape(n, heads, hd).transpose(1, 0, 2) * DTYPE(1.0 / cfg.temperature)
    sa = np.matmul(q3, k3a.transpose(0, 2, 1))
    sb = np.matmul(q3, k3b.transpose(0, 2, 1))
    mx = np.maximum(sa.max(axis=-1, keepdims=True), sb.max(axis=-1, keepdims=True))
    np.subtract(sa, mx, out=sa)
    np.exp(sa, out=sa)
    np.subtract(sb, mx, out=sb)
    np.exp(sb, out=sb)
    denom = sa.sum(axis=-1, keepdims=True, dtype=np.float64) + sb.sum(
        axis=-1, keepdims=True, dtype=np.float64
    )
    out = np.matmul(sa, v3a)
    out += np.matmul(sb, v3b)
    out *= (1.0 / denom).astype(DTYPE)
    return np.ascontiguousarray(out.transpose(1, 0, 2)).reshape(n, cfg.dim)


def self_attention(qkv: QKV, cfg: AttentionConfig) -> np.ndarray:
    """Attention of a frame over its own keys and values."""
    return attend(qkv.q, qkv.k, qkv.v, cfg)


def cross_frame_attention(
    query_frame: QKV,
    others: list[QKV],
    cfg: AttentionConfig,
    include_self: bool = True,
) -> np.ndarray:
    """Attention over keys/values concatenated from several frames.

    Context layout: own K/V first when include_self is set, then the
    provided frames' K/V in list order.
    """
    for o in others:
        if o.dim != query_frame.dim:
            raise ShapeError(f"context dim {o.dim} != query dim {query_frame.dim}")
    k_parts = ([query_frame.k] if include_self else []) + [o.k for o in others]
    v_parts = ([query_frame.v] if include_self else []) + [o.v for o in others]
    if not k_parts:
        raise EmptyContextError("cross_frame_attention with include_self=False and no others")
    k_cat = np.concatenate(k_parts, axis=0)
    v_cat = np.concatenate(v_parts, axis=0)
    return attend(query_frame.q, k_cat, v_cat, cfg)


def head_avg_attention_map(q_frame: QKV, k_frame: QKV, cfg: AttentionConfig) -> AttentionMap:
    """Per-head softmax score matrices averaged across heads.

    The average of row-stochastic matrices is row-stochastic, so the
    result can be read as a soft correspondence from query tokens to
    key tokens.
    """
    if q_frame.dim != k_frame.dim:
        raise ShapeError(f"query dim {q_frame.dim} != key dim {k_frame.dim}")
    n, m = q_frame.q.shape[0], k_frame.k.shape[0]
    heads, hd = cfg.num_heads, cfg.head_dim
    q3 = q_frame.q.reshape(n, heads, hd).transpose(1, 0, 2)
    k3 = k_frame.k.reshape(m, heads, hd).transpose(1, 2, 0)
    probs = _softmax_rows_unchecked(np.matmul(q3, k3), cfg.temperature)
    avg = probs.mean(axis=0, dtype=np.float64)
    return AttentionMap(avg.astype(DTYPE))
