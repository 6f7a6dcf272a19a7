"""Anchor-frame selection, the per-(layer, step) key/value cache, and
anchor-based cross-frame attention.

A small set of anchor frames is edited jointly; every key/value they
produce at every attention layer and pipeline step is cached. All other
frames then attend over [own K/V, cached anchor K/V], which propagates
the anchors' features across the whole video without the frames ever
seeing each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .attention import AttentionConfig, QKV, _attend_heads_pair, _to_heads, attend
from .errors import CompatibilityError, ParameterError, ShapeError
from .tensorcore import as_matrix


def select_anchor_indices(n_frames: int, num_anchors: int) -> list[int]:
    """Uniformly spaced anchor indices with equal intervals.

    One anchor sits at the middle frame; K anchors sit at
    floor(i * (N-1) / (K-1)) for i in 0..K-1 (always including the first
    and last frame).
    """
    if num_anchors < 1 or num_anchors > n_frames:
        raise ParameterError(
            f"num_anchors must be in [1, n_frames], got {num_anchors} for {n_frames} frames"
        )
    if num_anchors == 1:
        return [(n_frames - 1) // 2]
    idx = {i * (n_frames - 1) // (num_anchors - 1) for i in range(num_anchors)}
    return sorted(idx)


@dataclass(frozen=True)
class AnchorCache:
    """Immutable anchor key/value store indexed by (layer, step).

    Each entry holds the anchors' key and value rows concatenated in
    ascending anchor-frame order. Built once, then shared read-only by
    any number of concurrent frame edits.
    """

    num_anchors: int
    anchor_frame_indices: tuple[int, ...]
    entries: Mapping[tuple[int, int], tuple[np.ndarray, np.ndarray]]
    network_hash: str

    def __post_init__(self) -> None:
        idx = self.anchor_frame_indices
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ParameterError(f"anchor indices not strictly increasing: {idx}")
        for (layer, step), (k, v) in self.entries.items():
            if k.shape != v.shape:
                raise ShapeError(f"entry ({layer},{step}): K {k.shape} != V {v.shape}")
            if self.num_anchors and k.shape[0] % self.num_anchors != 0:
                raise ShapeError(
                    f"entry ({layer},{step}): {k.shape[0]} rows not a multiple "
                    f"of {self.num_anchors} anchors"
                )
        object.__setattr__(self, "_heads_cache", {})

    def heads_entry(self, layer: int, step: int, cfg: AttentionConfig):
        """Per-head (heads, m, head_dim) layout of an entry, built lazily.

        The layout depends only on the immutable entry and the head
        count, so concurrent builders can only write identical values.
        """
        key = (layer, step, cfg.num_heads)
        cached = self._heads_cache.get(key)
        if cached is None:
            k, v = self.entries[(layer, step)]
            cached = (_to_heads(k, cfg), _to_heads(v, cfg))
            self._heads_cache[key] = cached
        return cached

    def entry(self, layer: int, step: int, tokens_per_anchor: int | None = None):
        """Look up the (K, V) pair for one attention site."""
        try:
            k, v = self.entries[(layer, step)]
        except KeyError:
            raise CompatibilityError(f"cache has no entry for layer {layer}, step {step}")
        if tokens_per_anchor is not None and k.shape[0] != self.num_anchors * tokens_per_anchor:
            raise ShapeError(
                f"entry ({layer},{step}) has {k.shape[0]} rows, expected "
                f"{self.num_anchors} anchors x {tokens_per_anchor} tokens"
            )
        return k, v


def anchor_attention(frame_qkv: QKV, cache_entry, cfg: AttentionConfig) -> np.ndarray:
    """Attention of one frame over [own K/V, cached anchor K/V].

    An empty cache entry (zero rows) reduces exactly to self-attention:
    the key set is then the frame's own keys and the code path is
    identical. A cache entry may be the raw (K, V) matrices or their
    prebuilt per-head layout from AnchorCache.heads_entry.
    """
    k_anc, v_anc = cache_entry
    if k_anc.ndim == 3:
        if k_anc.shape != v_anc.shape or k_anc.shape[0] != cfg.num_heads:
            raise ShapeError(f"bad per-head cache entry: K {k_anc.shape}, V {v_anc.shape}")
        if k_anc.shape[2] != cfg.head_dim:
            raise ShapeError(f"cache entry head_dim {k_anc.shape[2]} != {cfg.head_dim}")
        k3_anc, v3_anc = k_anc, v_anc
    else:
        k_anc = as_matrix(k_anc, "K_anc")
        v_anc = as_matrix(v_anc, "V_anc")
        if k_anc.shape != v_anc.shape:
            raise ShapeError(f"cache entry K {k_anc.shape} != V {v_anc.shape}")
        if k_anc.shape[0] > 0 and k_anc.shape[1] != frame_qkv.dim:
            raise ShapeError(f"cache entry dim {k_anc.shape[1]} != frame dim {frame_qkv.dim}")
        if k_anc.shape[0] == 0:
            return attend(frame_qkv.q, frame_qkv.k, frame_qkv.v, cfg)
        k3_anc, v3_anc = _to_heads(k_anc, cfg), _to_heads(v_anc, cfg)
    if k3_anc.shape[1] == 0:
        return attend(frame_qkv.q, frame_qkv.k, frame_qkv.v, cfg)
    return _attend_heads_pair(
        frame_qkv.q,
        _to_heads(frame_qkv.k, cfg),
        _to_heads(frame_qkv.v, cfg),
        k3_anc,
        v3_anc,
        cfg,
    )


def build_anchor_cache(anchors, network, steps: int | None = None) -> AnchorCache:
    """Run the anchor batch through the network and cache every K/V.

    The anchors are edited jointly (each attends cross-frame over the
    whole batch); their key/value rows at every (layer, step) site are
    recorded and concatenated in ascending anchor-frame order.
    """
    from .propagation import run_anchor_batch

    if steps is not None and steps != network.steps:
        network = network.with_steps(steps)
    cache, _ = run_anchor_batch(anchors, network)
    return cache


def save_cache(cache: AnchorCache, directory: str | Path) -> Path:
    """Serialize a cache to a directory of tensor containers plus a manifest."""
    from .container import write_tensor

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    keys = sorted(cache.entries)
    for layer, step in keys:
        k, v = cache.entries[(layer, step)]
        write_tensor(directory / f"entry_L{layer}_S{step}_k.apft", k)
        write_tensor(directory / f"entry_L{layer}_S{step}_v.apft", v)
    manifest = {
        "num_anchors": cache.num_anchors,
        "anchor_frame_indices": list(cache.anchor_frame_indices),
        "network_hash": cache.network_hash,
        "entries": [[layer, step] for layer, step in keys],
    }
    path = directory / "cache.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_cache(directory: str | Path) -> AnchorCache:
    """Load a cache previously written by save_cache."""
    from .container import read_tensor

    directory = Path(directory)
    manifest = json.loads((directory / "cache.json").read_text())
    entries = {}
    for layer, step in manifest["entries"]:
        k = read_tensor(directory / f"entry_L{layer}_S{step}_k.apft")
        v = read_tensor(directory / f"entry_L{layer}_S{step}_v.apft")
        entries[(layer, step)] = (k, v)
    return AnchorCache(
        num_anchors=manifest["num_anchors"],
        anchor_frame_indices=tuple(manifest["anchor_frame_indices"]),
        entries=entries,
        network_hash=manifest["network_hash"],
    )
