"""End-to-end per-frame editing pipeline.

A seeded, layered toy network stands in for the heavy image-editing model:
an encoder-style resolution pyramid of attention layers, run for a fixed
number of refinement steps, plus a seeded "edit" transformation applied to
the features each step. The edit transformation deliberately includes a
content-sensitive pseudo-noise term: without it, a deterministic pointwise
network would be trivially consistent across frames and the whole
anchored-vs-independent comparison would be untestable.

Three modes:
  * independent - each frame edited alone (self-attention only);
  * anchored    - anchor frames edited jointly as a batch, their K/V
                  cached, every other frame attends over the cache;
  * recorded    - internal: an independent run that records Q/K per
                  (layer, step) for the tracking evaluation.

Every path is deterministic: outputs depend only on (frame, network,
cache), never on evaluation order or worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .anchor import AnchorCache, anchor_attention
from .attention import AttentionConfig, FrameFeatures, QKV, cross_frame_attention, self_attention
from .errors import CompatibilityError, ParameterError, ShapeError
from .tensorcore import DTYPE


def downsample_tokens(tokens: np.ndarray, grid: int) -> np.ndarray:
    """Halve a square token grid by 2x2 mean pooling (64-bit means)."""
    dim = tokens.shape[1]
    g = grid // 2
    cube = tokens.reshape(grid, grid, dim).astype(np.float64)
    pooled = cube.reshape(g, 2, g, 2, dim).mean(axis=(1, 3))
    return pooled.reshape(g * g, dim).astype(DTYPE)


def upsample_tokens(tokens: np.ndarray, grid: int) -> np.ndarray:
    """Double a square token grid by nearest-neighbor duplication."""
    dim = tokens.shape[1]
    cube = tokens.reshape(grid, grid, dim)
    up = np.repeat(np.repeat(cube, 2, axis=0), 2, axis=1)
    return up.reshape(4 * grid * grid, dim)


def resample_tokens(tokens: np.ndarray, grid_from: int, grid_to: int) -> np.ndarray:
    """Bring a token grid to another power-of-two resolution."""
    g = grid_from
    while g > grid_to:
        tokens = downsample_tokens(tokens, g)
        g //= 2
    while g < grid_to:
        tokens = upsample_tokens(tokens, g)
        g *= 2
    return tokens


def _resample_with_skips(tokens: np.ndarray, grid_from: int, grid_to: int, stack: list) -> np.ndarray:
    """Resample while maintaining U-Net style skip connections.

    Every halving pushes the pre-pool grid; every doubling pops one and
    averages it back in. Without the skips, one trip through the
    bottleneck would leave the feature stream block-constant at the
    finest resolution forever.
    """
    g = grid_from
    while g > grid_to:
        stack.append(tokens)
        tokens = downsample_tokens(tokens, g)
        g //= 2
    while g < grid_to:
        tokens = upsample_tokens(tokens, g)
        g *= 2
        if stack:
            tokens = DTYPE(0.5) * (tokens + stack.pop())
    return tokens


@dataclass(frozen=True)
class LayerSpec:
    """One attention layer: its grid resolution and seeded projections."""

    grid: int
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray


@dataclass(frozen=True)
class EditSpec:
    """Seeded feature-space edit, the stand-in for a text instruction.

    Applied once per step: a global affine nudge of the features plus a
    bounded sine term driven by a random projection of the features
    themselves. The sine term is the deliberate noise source: it depends
    only on frame content (never the frame index), so identical frames
    stay identical while near-identical frames decorrelate.
    """

    w_edit: np.ndarray
    b_edit: np.ndarray
    w_noise: np.ndarray
    strength: float
    noise_amp: float
    noise_freq: float


@dataclass(frozen=True)
class ToyEditNetwork:
    """Seeded layered attention network over token grids.

    The pyramid lists the attention layers' grid sizes (each adjacent
    pair halves or doubles). Features enter and leave at `grid`; when
    the pyramid starts below `grid` the entry/exit resampling mirrors
    latent-space editing models, which run attention below the input
    resolution.
    """

    seed: int
    grid: int
    dim: int
    num_heads: int
    steps: int
    pyramid: tuple[int, ...]
    qk_gain: float
    cond_weight: float
    layers: tuple[LayerSpec, ...]
    edit: EditSpec

    @staticmethod
    def default_pyramid(grid: int) -> tuple[int, ...]:
        top = min(grid, 16)
        if top >= 8:
            return (top, top // 2, top // 4, top // 2, top)
        if top >= 2:
            return (top, top // 2, top)
        return (top,)

    @classmethod
    def create(
        cls,
        seed: int,
        grid: int = 16,
        dim: int = 64,
        num_heads: int = 2,
        steps: int = 10,
        pyramid: tuple[int, ...] | None = None,
        qk_gain: float = 1.5,
        cond_weight: float = 1.0,
        edit_strength: float = 0.3,
        noise_amp: float = 0.2,
        noise_freq: float = 6.0,
    ) -> "ToyEditNetwork":
        if steps < 1:
            raise ParameterError(f"steps must be >= 1, got {steps}")
        if grid < 1 or grid & (grid - 1):
            raise ParameterError(f"grid must be a positive power of two, got {grid}")
        if dim % num_heads != 0:
            raise ParameterError(f"dim {dim} not divisible by num_heads {num_heads}")
        pyramid = tuple(pyramid) if pyramid is not None else cls.default_pyramid(grid)
        for a, b in zip(pyramid, pyramid[1:]):
            if b not in (a * 2, a // 2):
                raise ParameterError(f"pyramid stages must halve or double: {pyramid}")
        if pyramid[0] > grid:
            raise ParameterError(f"pyramid entry {pyramid[0]} exceeds input grid {grid}")

        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(dim)
        layers = []
        for g in pyramid:
            wq = (rng.standard_normal((dim, dim)) * scale * qk_gain).astype(DTYPE)
            wv = (rng.standard_normal((dim, dim)) * scale).astype(DTYPE)
            wo = (rng.standard_normal((dim, dim)) * scale).astype(DTYPE)
            # shared Q/K projection: scores become a PSD content similarity,
            # which is what makes the attention map a correspondence estimate
            layers.append(LayerSpec(grid=g, wq=wq, wk=wq, wv=wv, wo=wo))
        edit = EditSpec(
            w_edit=(rng.standard_normal((dim, dim)) * scale).astype(DTYPE),
            b_edit=(rng.standard_normal(dim) * 0.1).astype(DTYPE),
            w_noise=(rng.standard_normal((dim, dim)) * scale).astype(DTYPE),
            strength=edit_strength,
            noise_amp=noise_amp,
            noise_freq=noise_freq,
        )
        return cls(
            seed=seed,
            grid=grid,
            dim=dim,
            num_heads=num_heads,
            steps=steps,
            pyramid=pyramid,
            qk_gain=qk_gain,
            cond_weight=cond_weight,
            layers=tuple(layers),
            edit=edit,
        )

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "grid": self.grid,
            "dim": self.dim,
            "num_heads": self.num_heads,
            "steps": self.steps,
            "pyramid": list(self.pyramid),
            "qk_gain": self.qk_gain,
            "cond_weight": self.cond_weight,
            "edit_strength": self.edit.strength,
            "noise_amp": self.edit.noise_amp,
            "noise_freq": self.edit.noise_freq,
        }

    @property
    def config_hash(self) -> str:
        payload = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def with_steps(self, steps: int) -> "ToyEditNetwork":
        return replace(self, steps=steps)

    @property
    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(num_heads=self.num_heads, dim=self.dim)

    def tokens_at_layer(self, layer_index: int) -> int:
        g = self.layers[layer_index].grid
        return g * g


def _rmsnorm(x: np.ndarray) -> np.ndarray:
    """Per-token RMS normalization; keeps the residual stream from either
    exploding or contracting all tokens onto a common fixed point.

    Mean squares accumulate in 64-bit; the array stays in its own dtype.
    """
    ms = np.mean(x * x, axis=1, keepdims=True, dtype=np.float64)
    inv = 1.0 / np.sqrt(ms + 1e-8)
    return x * inv.astype(x.dtype)


def _apply_edit(x: np.ndarray, edit: EditSpec) -> np.ndarray:
    nudge = x @ edit.w_edit + edit.b_edit
    wobble = np.sin(DTYPE(edit.noise_freq) * (x @ edit.w_noise))
    mixed = x + DTYPE(edit.strength) * nudge + DTYPE(edit.noise_amp) * wobble
    return _rmsnorm(mixed)


def _project(x: np.ndarray, layer: LayerSpec) -> QKV:
    x64 = x.astype(np.float64)
    q = (x64 @ layer.wq.astype(np.float64)).astype(DTYPE)
    k = q if layer.wk is layer.wq else (x64 @ layer.wk.astype(np.float64)).astype(DTYPE)
    v = (x64 @ layer.wv.astype(np.float64)).astype(DTYPE)
    return QKV(q, k, v)


def _forward_batch(
    tokens_list: list[np.ndarray],
    network: ToyEditNetwork,
    *,
    cross_frame: bool = False,
    cache: AnchorCache | None = None,
    on_site: Callable[[int, int, int, QKV], None] | None = None,
) -> list[np.ndarray]:
    """Run a batch of frames through all steps and layers.

    `on_site(layer, step, frame_pos, qkv)` is invoked at every attention
    site before attending, which is how the cache builder and the
    tracking evaluation observe K/V and Q/K.
    """
    cfg = network.attention_config
    xs = list(tokens_list)
    # the editor is conditioned on its source frame: every step re-injects
    # the (normalized) input features, the way image-conditioned editors
    # feed the source image into every denoising step
    sources = [_rmsnorm(x) for x in tokens_list]
    cond = DTYPE(network.cond_weight)
    for step in range(network.steps):
        xs = [_rmsnorm(x + cond * src) for x, src in zip(xs, sources)]
        grid = network.grid
        stacks: list[list] = [[] for _ in xs]
        for li, layer in enumerate(network.layers):
            xs = [_resample_with_skips(x, grid, layer.grid, s) for x, s in zip(xs, stacks)]
            grid = layer.grid
            qkvs = [_project(x, layer) for x in xs]
            if on_site is not None:
                for i, qkv in enumerate(qkvs):
                    on_site(li, step, i, qkv)
            if cross_frame:
                attended = [
                    cross_frame_attention(
                        qkvs[i], [qkvs[j] for j in range(len(qkvs)) if j != i], cfg
                    )
                    for i in range(len(qkvs))
                ]
            elif cache is not None:
                cache.entry(li, step, tokens_per_anchor=grid * grid)
                entry = cache.heads_entry(li, step, cfg)
                attended = [anchor_attention(qkv, entry, cfg) for qkv in qkvs]
            else:
                attended = [self_attention(qkv, cfg) for qkv in qkvs]
            updates = [a @ layer.wo for a in attended]
            for u, x in zip(updates, xs):
                np.tanh(u, out=u)
                u += x
            xs = [_rmsnorm(u) for u in updates]
        xs = [_resample_with_skips(x, grid, network.grid, s) for x, s in zip(xs, stacks)]
        xs = [_apply_edit(x, network.edit) for x in xs]
    return xs


def _check_frame(frame: FrameFeatures, network: ToyEditNetwork) -> None:
    if frame.grid_h != network.grid or frame.grid_w != network.grid:
        raise ShapeError(
            f"frame grid {frame.grid_h}x{frame.grid_w} != network grid {network.grid}"
        )
    if frame.dim != network.dim:
        raise ShapeError(f"frame dim {frame.dim} != network dim {network.dim}")


def edit_frame(
    frame: FrameFeatures,
    network: ToyEditNetwork,
    cache: AnchorCache | None = None,
) -> FrameFeatures:
    """Edit a single frame; with a cache, every attention site is anchored."""
    _check_frame(frame, network)
    if cache is not None and cache.network_hash != network.config_hash:
        raise CompatibilityError(
            f"cache built for network {cache.network_hash}, got {network.config_hash}"
        )
    out = _forward_batch([frame.tokens], network, cache=cache)[0]
    return FrameFeatures(frame.frame_index, network.grid, network.grid, out)


def run_anchor_batch(anchors, network: ToyEditNetwork):
    """Jointly edit the anchor batch, caching K/V at every (layer, step).

    Anchors are processed in ascending frame order regardless of the
    order given, so the cache layout (and therefore every downstream
    output) is independent of caller ordering. Returns the cache and
    the anchors' edited frames.
    """
    if not anchors:
        raise ParameterError("anchor list is empty")
    anchors = sorted(anchors, key=lambda f: f.frame_index)
    for f in anchors:
        _check_frame(f, network)

    recorded: dict[tuple[int, int], list] = {}

    def on_site(layer: int, step: int, pos: int, qkv: QKV) -> None:
        recorded.setdefault((layer, step), [None] * len(anchors))[pos] = (qkv.k, qkv.v)

    outs = _forward_batch(
        [f.tokens for f in anchors], network, cross_frame=True, on_site=on_site
    )
    entries = {
        key: (
            np.concatenate([kv[0] for kv in pairs], axis=0),
            np.concatenate([kv[1] for kv in pairs], axis=0),
        )
        for key, pairs in recorded.items()
    }
    cache = AnchorCache(
        num_anchors=len(anchors),
        anchor_frame_indices=tuple(f.frame_index for f in anchors),
        entries=entries,
        network_hash=network.config_hash,
    )
    frames = [
        FrameFeatures(f.frame_index, network.grid, network.grid, out)
        for f, out in zip(anchors, outs)
    ]
    return cache, frames


def record_sites(
    frame: FrameFeatures,
    network: ToyEditNetwork,
    sites=None,
) -> dict[tuple[int, int], QKV]:
    """Independent run of one frame, returning the QKV per (layer, step).

    `sites` optionally restricts which (layer, step) pairs are kept,
    which bounds memory when only a few are needed.
    """
    _check_frame(frame, network)
    keep = None if sites is None else set(sites)
    recorded: dict[tuple[int, int], QKV] = {}

    def on_site(layer: int, step: int, pos: int, qkv: QKV) -> None:
        if keep is None or (layer, step) in keep:
            recorded[(layer, step)] = qkv

    _forward_batch([frame.tokens], network, on_site=on_site)
    return recorded


@dataclass(frozen=True)
class EditedVideo:
    """Edited frame features plus everything needed to reproduce them."""

    frames: tuple[FrameFeatures, ...]
    mode: str
    provenance: dict

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def stacked(self) -> np.ndarray:
        """(n_frames, grid, grid, dim) array of the edited features."""
        g = self.frames[0].grid_h
        return np.stack([f.tokens.reshape(g, g, -1) for f in self.frames])


MODES = ("independent", "anchored")


def edit_video(
    frames,
    network: ToyEditNetwork,
    mode: str = "anchored",
    num_anchors: int = 3,
) -> EditedVideo:
    """Edit a whole clip frame by frame.

    Independent mode edits each frame with no shared context. Anchored
    mode edits the anchor frames jointly as a batch (their batch outputs
    are the anchors' edited frames) and every remaining frame against
    the anchor cache.
    """
    frames = list(frames)
    if not frames:
        raise ParameterError("empty clip")
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")

    if mode == "independent":
        edited = [edit_frame(f, network) for f in frames]
        anchor_indices: list[int] = []
    else:
        from .anchor import select_anchor_indices

        anchor_indices = select_anchor_indices(len(frames), num_anchors)
        cache, anchor_frames = run_anchor_batch([frames[i] for i in anchor_indices], network)
        # run_anchor_batch stable-sorts by frame_index; mirror that sort to
        # map each batch output back to its clip position
        order = sorted(range(len(anchor_indices)), key=lambda j: frames[anchor_indices[j]].frame_index)
        output_at = {anchor_indices[pos]: out for pos, out in zip(order, anchor_frames)}
        edited = []
        for i, f in enumerate(frames):
            if i in output_at:
                edited.append(output_at[i])
            else:
                edited.append(edit_frame(f, network, cache))

    provenance = {
        "mode": mode,
        "n_frames": len(frames),
        "num_anchors": num_anchors if mode == "anchored" else 0,
        "anchor_indices": anchor_indices,
        "network": network.describe(),
        "network_hash": network.config_hash,
    }
    return EditedVideo(frames=tuple(edited), mode=mode, provenance=provenance)
