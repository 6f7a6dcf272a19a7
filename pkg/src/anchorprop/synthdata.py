"""Synthetic clips with exact ground-truth correspondence.

Clips are token-feature videos generated from a seeded base grid moved
along a known motion path, so every frame pair has an exact dense
pixel-to-pixel forward map. Shift motion uses torus (wrap-around)
semantics: content leaving one edge re-enters at the other, and the
ground-truth maps wrap the same way, which keeps every query point
trackable. The distinct-token mode gives every token a one-hot feature so
argmax tracking has a unique optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import FrameFeatures
from .equivariance import bilinear_sample
from .errors import ParameterError
from .tensorcore import DTYPE

MOTIONS = ("none", "shift", "affine")


@dataclass(frozen=True)
class ClipSpec:
    """Generator parameters; regeneration from the spec is bit-identical."""

    seed: int = 0
    n_frames: int = 8
    grid: int = 16
    dim: int = 64
    motion: str = "shift"
    shift_tokens: tuple[float, float] = (1.0, 0.0)
    distinct_tokens: bool = False
    image_size: int = 256
    rotate_deg: float = 0.0
    translate_tokens: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ParameterError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.motion not in MOTIONS:
            raise ParameterError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        if self.grid < 2:
            raise ParameterError(f"grid must be >= 2, got {self.grid}")
        if self.image_size % self.grid != 0:
            raise ParameterError(
                f"image_size {self.image_size} not divisible by grid {self.grid}"
            )
        if self.distinct_tokens and self.dim != self.grid * self.grid:
            raise ParameterError(
                f"distinct tokens need dim == grid^2 ({self.grid * self.grid}), got {self.dim}"
            )

    @property
    def stride(self) -> float:
        return self.image_size / self.grid

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_frames": self.n_frames,
            "grid": self.grid,
            "dim": self.dim,
            "motion": self.motion,
            "shift_tokens": list(self.shift_tokens),
            "distinct_tokens": self.distinct_tokens,
            "image_size": self.image_size,
            "rotate_deg": self.rotate_deg,
            "translate_tokens": list(self.translate_tokens),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClipSpec":
        d = dict(d)
        d["shift_tokens"] = tuple(d.get("shift_tokens", (1.0, 0.0)))
        d["translate_tokens"] = tuple(d.get("translate_tokens", (0.0, 0.0)))
        return cls(**d)


def _token_affine(spec: ClipSpec) -> np.ndarray:
    """Per-frame affine step in token coordinates, about the grid center."""
    c = (spec.grid - 1) / 2.0
    th = np.radians(spec.rotate_deg)
    lin = spec.scale * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    m = np.eye(3)
    m[:2, :2] = lin
    m[:2, 2] = -lin @ [c, c] + [c, c] + np.asarray(spec.translate_tokens, dtype=np.float64)
    return m


@dataclass(frozen=True)
class SyntheticClip:
    """Generated frames plus exact forward motion maps."""

    spec: ClipSpec
    frames: tuple[FrameFeatures, ...]
    motion: tuple[np.ndarray, ...]  # dense (S, S, 2) maps for consecutive pairs

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def target_point(self, t: int, t_prime: int, point: tuple[float, float]) -> tuple[float, float]:
        """Exact ground-truth target pixel for a query pixel."""
        x, y = float(point[0]), float(point[1])
        s = self.spec.image_size
        delta = t_prime - t
        if self.spec.motion == "none":
            return x, y
        if self.spec.motion == "shift":
            dx, dy = self.spec.shift_tokens
            px = (x + delta * dx * self.spec.stride) % s
            py = (y + delta * dy * self.spec.stride) % s
            return float(px), float(py)
        m = np.linalg.matrix_power(_token_affine(self.spec), delta) if delta >= 0 else np.linalg.inv(
            np.linalg.matrix_power(_token_affine(self.spec), -delta)
        )
        stride = self.spec.stride
        tx, ty = x / stride - 0.5, y / stride - 0.5
        ux = m[0, 0] * tx + m[0, 1] * ty + m[0, 2]
        uy = m[1, 0] * tx + m[1, 1] * ty + m[1, 2]
        return float((ux + 0.5) * stride), float((uy + 0.5) * stride)

    def forward_map(self, t: int, t_prime: int) -> tuple[np.ndarray, np.ndarray]:
        """Dense forward map (S, S, 2) and validity mask for a frame pair.

        map[y, x] is the target pixel (x', y') of source pixel (x, y).
        For wrap-around shift motion every pixel is valid; for affine
        motion a pixel is valid when its content is real (the source of
        frame t's content is in bounds) and its target stays in bounds.
        """
        s = self.spec.image_size
        ys, xs = np.mgrid[0:s, 0:s].astype(np.float64)
        if self.spec.motion == "none":
            out = np.stack([xs, ys], axis=-1)
            return out.astype(DTYPE), np.ones((s, s), bool)
        if self.spec.motion == "shift":
            delta = t_prime - t
            dx, dy = self.spec.shift_tokens
            out = np.stack(
                [(xs + delta * dx * self.spec.stride) % s, (ys + delta * dy * self.spec.stride) % s],
                axis=-1,
            )
            return out.astype(DTYPE), np.ones((s, s), bool)

        step = _token_affine(self.spec)
        stride = self.spec.stride
        tx, ty = xs / stride - 0.5, ys / stride - 0.5

        def apply(m, ax, ay):
            return (
                m[0, 0] * ax + m[0, 1] * ay + m[0, 2],
                m[1, 0] * ax + m[1, 1] * ay + m[1, 2],
            )

        fwd = np.linalg.matrix_power(step, abs(t_prime - t))
        if t_prime < t:
            fwd = np.linalg.inv(fwd)
        ux, uy = apply(fwd, tx, ty)
        out = np.stack([(ux + 0.5) * stride, (uy + 0.5) * stride], axis=-1)

        back = np.linalg.inv(np.linalg.matrix_power(step, t))
        bx, by = apply(back, tx, ty)
        g = self.spec.grid
        src_ok = (bx >= -0.5) & (bx <= g - 0.5) & (by >= -0.5) & (by <= g - 0.5)
        tgt_ok = (out[..., 0] >= 0) & (out[..., 0] < s) & (out[..., 1] >= 0) & (out[..., 1] < s)
        return out.astype(DTYPE), src_ok & tgt_ok


def _base_grid(spec: ClipSpec) -> np.ndarray:
    if spec.distinct_tokens:
        return np.eye(spec.grid * spec.grid, dtype=DTYPE).reshape(spec.grid, spec.grid, spec.dim)
    rng = np.random.default_rng(spec.seed)
    field = rng.uniform(-1.0, 1.0, size=(spec.grid, spec.grid, spec.dim))
    # light wrap-around box blur for local structure
    smooth = field.copy()
    for axis in (0, 1):
        smooth = (smooth + np.roll(smooth, 1, axis) + np.roll(smooth, -1, axis)) / 3.0
    return (1.5 * smooth).clip(-1.0, 1.0).astype(DTYPE)


def _shift_frame(base: np.ndarray, offset: tuple[float, float]) -> np.ndarray:
    """Cyclically shift a (g, g, dim) grid by (dx, dy) tokens."""
    dx, dy = offset
    g = base.shape[0]
    if float(dx).is_integer() and float(dy).is_integer():
        return np.roll(base, (int(dy), int(dx)), axis=(0, 1)).copy()
    ys, xs = np.mgrid[0:g, 0:g].astype(np.float64)
    out = bilinear_sample(base, xs - dx, ys - dy, mode="wrap")
    return out.astype(DTYPE)


def _affine_frame(base: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    g = base.shape[0]
    inv = np.linalg.inv(matrix)
    ys, xs = np.mgrid[0:g, 0:g].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    return bilinear_sample(base, sx, sy, mode="zero").astype(DTYPE)


def generate_clip(spec: ClipSpec) -> SyntheticClip:
    """Render the clip described by `spec` with its exact motion maps."""
    base = _base_grid(spec)
    g, dim = spec.grid, spec.dim

    frames = []
    for t in range(spec.n_frames):
        if spec.motion == "none" or t == 0:
            grid_t = base.copy()
        elif spec.motion == "shift":
            dx, dy = spec.shift_tokens
            grid_t = _shift_frame(base, (t * dx, t * dy))
        else:
            m = np.linalg.matrix_power(_token_affine(spec), t)
            grid_t = _affine_frame(base, m)
        frames.append(FrameFeatures(t, g, g, grid_t.reshape(g * g, dim)))

    clip = SyntheticClip(spec=spec, frames=tuple(frames), motion=())
    if spec.motion == "affine" and spec.n_frames > 1:
        _, src_ok = clip.forward_map(spec.n_frames - 1, 0)
        if not src_ok.any():
            raise ParameterError("affine motion leaves bounds entirely by the last frame")
    maps = tuple(
        clip.forward_map(t, t + 1)[0] for t in range(spec.n_frames - 1)
    )
    return SyntheticClip(spec=spec, frames=tuple(frames), motion=maps)
