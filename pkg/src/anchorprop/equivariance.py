"""Paired affine augmentation and the equivariance verification harness.

The augmentation draws one random affine transform (rotation, translation,
scale, shear, plus a resize-and-crop) and applies it identically to a
source/edited image pair. An editor trained on such pairs should commute
with the transforms; `verify_equivariance` measures how far a given editor
is from doing so.

Images are (height, width, channels) float32 arrays with values in [0, 1],
channels 1 or 3. Transform composition order is fixed and part of the
format contract: resize, then rotate about the image center, then shear,
then scale, then translate (one composed matrix, bilinear sampling,
out-of-bounds reads as zero), then crop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundsError, NumericError, ParameterError, ShapeError

ROTATION_MAX_DEG = 5.0
TRANSLATE_MAX_FRAC = 0.05
SCALE_RANGE = (0.95, 1.05)
SHEAR_MAX_DEG = 5.0
RESIZE_TO = 288
CROP_SIZE = 256


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ShapeError(f"{name}: expected (H, W, 1|3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name}: empty image {arr.shape}")
    arr = arr.astype(np.float32, copy=False)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: non-finite pixels")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise BoundsError(f"{name}: pixel values outside [0, 1]")
    return arr


@dataclass(frozen=True)
class AffineParams:
    """One sampled transform, applied identically to both images of a pair."""

    rotation_deg: float
    translate_frac: tuple[float, float]
    scale: float
    shear_deg: tuple[float, float]
    resize_to: int = RESIZE_TO
    crop_size: int = CROP_SIZE
    crop_offset: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if abs(self.rotation_deg) >= ROTATION_MAX_DEG:
            raise ParameterError(f"|rotation| must be < {ROTATION_MAX_DEG}, got {self.rotation_deg}")
        if any(abs(t) > TRANSLATE_MAX_FRAC for t in self.translate_frac):
            raise ParameterError(f"translation outside +/-{TRANSLATE_MAX_FRAC}: {self.translate_frac}")
        if not SCALE_RANGE[0] <= self.scale <= SCALE_RANGE[1]:
            raise ParameterError(f"scale outside {SCALE_RANGE}: {self.scale}")
        if any(abs(s) > SHEAR_MAX_DEG for s in self.shear_deg):
            raise ParameterError(f"shear outside +/-{SHEAR_MAX_DEG}: {self.shear_deg}")
        if self.crop_size > self.resize_to:
            raise ParameterError(f"crop {self.crop_size} larger than resize {self.resize_to}")
        ox, oy = self.crop_offset
        if not (0 <= ox <= self.resize_to - self.crop_size and 0 <= oy <= self.resize_to - self.crop_size):
            raise ParameterError(f"crop offset {self.crop_offset} outside resized bounds")

    def to_dict(self) -> dict:
        return {
            "rotation_deg": self.rotation_deg,
            "translate_frac": list(self.translate_frac),
            "scale": self.scale,
            "shear_deg": list(self.shear_deg),
            "resize_to": self.resize_to,
            "crop_size": self.crop_size,
            "crop_offset": list(self.crop_offset),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineParams":
        return cls(
            rotation_deg=d["rotation_deg"],
            translate_frac=tuple(d["translate_frac"]),
            scale=d["scale"],
            shear_deg=tuple(d["shear_deg"]),
            resize_to=d["resize_to"],
            crop_size=d["crop_size"],
            crop_offset=tuple(d["crop_offset"]),
        )

    def matrix(self) -> np.ndarray:
        """Forward 3x3 matrix of the affine stage on the resized image.

        Rotation about the image center, then shear, then scale, then
        translation (in pixels of the resized image).
        """
        s = self.resize_to
        c = (s - 1) / 2.0
        th = math.radians(self.rotation_deg)
        rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        shear = np.array(
            [[1.0, math.tan(math.radians(self.shear_deg[0]))],
             [math.tan(math.radians(self.shear_deg[1])), 1.0]]
        )
        lin = self.scale * (shear @ rot)
        t = np.array(self.translate_frac, dtype=np.float64) * s
        m = np.eye(3)
        m[:2, :2] = lin
        m[:2, 2] = -lin @ [c, c] + [c, c] + t
        return m


def sample_affine(rng_seed) -> AffineParams:
    """Draw AffineParams uniformly from the augmentation ranges.

    Accepts an integer seed or a numpy Generator; identical seeds give
    identical parameters. Draw order is fixed: rotation, translation x/y,
    scale, shear x/y, crop offset x/y.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    rotation = float(rng.uniform(-ROTATION_MAX_DEG, ROTATION_MAX_DEG))
    tx = float(rng.uniform(-TRANSLATE_MAX_FRAC, TRANSLATE_MAX_FRAC))
    ty = float(rng.uniform(-TRANSLATE_MAX_FRAC, TRANSLATE_MAX_FRAC))
    scale = float(rng.uniform(*SCALE_RANGE))
    sx = float(rng.uniform(-SHEAR_MAX_DEG, SHEAR_MAX_DEG))
    sy = float(rng.uniform(-SHEAR_MAX_DEG, SHEAR_MAX_DEG))
    span = RESIZE_TO - CROP_SIZE
    ox = int(rng.integers(0, span + 1))
    oy = int(rng.integers(0, span + 1))
    return AffineParams(
        rotation_deg=rotation,
        translate_frac=(tx, ty),
        scale=scale,
        shear_deg=(sx, sy),
        resize_to=RESIZE_TO,
        crop_size=CROP_SIZE,
        crop_offset=(ox, oy),
    )


def bilinear_sample(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray, mode: str = "zero") -> np.ndarray:
    """Sample (H, W, C) array at real coordinates, returning float64.

    mode "zero": out-of-bounds taps contribute 0 (zero padding);
    mode "clamp": coordinates clamp to the border (edge replication);
    mode "wrap": coordinates wrap around (torus topology).
    """
    h, w = arr.shape[:2]
    a = arr.astype(np.float64)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    def gather(yi, xi):
        if mode == "wrap":
            return a[yi % h, xi % w]
        if mode == "clamp":
            return a[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        inside = ((yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)).astype(np.float64)
        vals = a[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        return vals * inside[..., None]

    if mode == "clamp":
        x0 = np.clip(x0, 0, w - 1)
        y0 = np.clip(y0, 0, h - 1)
        fx = np.clip(xs - x0, 0.0, 1.0)
        fy = np.clip(ys - y0, 0.0, 1.0)

    w00 = ((1 - fx) * (1 - fy))[..., None]
    w01 = (fx * (1 - fy))[..., None]
    w10 = ((1 - fx) * fy)[..., None]
    w11 = (fx * fy)[..., None]
    return (
        w00 * gather(y0, x0)
        + w01 * gather(y0, x0 + 1)
        + w10 * gather(y0 + 1, x0)
        + w11 * gather(y0 + 1, x0 + 1)
    )


def resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    """Resize to size x size, half-pixel centers, edge-replicating taps."""
    h, w = img.shape[:2]
    if h == size and w == size:
        return img.astype(np.float32, copy=True)
    ys = (np.arange(size, dtype=np.float64) + 0.5) * h / size - 0.5
    xs = (np.arange(size, dtype=np.float64) + 0.5) * w / size - 0.5
    gx, gy = np.meshgrid(xs, ys)
    out = bilinear_sample(img, gx, gy, mode="clamp")
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _affine_grid(params: AffineParams):
    s = params.resize_to
    inv = np.linalg.inv(params.matrix())
    ys, xs = np.mgrid[0:s, 0:s].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    return sx, sy


def warp_image(img: np.ndarray, params: AffineParams) -> np.ndarray:
    """Resize, apply the composed affine (bilinear, zero padding), crop."""
    img = validate_image(img)
    resized = resize_bilinear(img, params.resize_to)
    sx, sy = _affine_grid(params)
    warped = bilinear_sample(resized, sx, sy, mode="zero")
    ox, oy = params.crop_offset
    cs = params.crop_size
    if oy + cs > params.resize_to or ox + cs > params.resize_to:
        raise ParameterError(f"crop {params.crop_offset}+{cs} outside resized bounds")
    out = warped[oy : oy + cs, ox : ox + cs]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def valid_region(params: AffineParams) -> np.ndarray:
    """Boolean mask (crop_size x crop_size) of pixels whose inverse-mapped
    source lies inside the resized image, i.e. where no zero padding was
    sampled."""
    s = params.resize_to
    sx, sy = _affine_grid(params)
    ok = (sx >= 0.0) & (sx <= s - 1.0) & (sy >= 0.0) & (sy <= s - 1.0)
    ox, oy = params.crop_offset
    cs = params.crop_size
    return ok[oy : oy + cs, ox : ox + cs]


def augment_pair(src: np.ndarray, edited: np.ndarray, rng_seed) -> tuple[np.ndarray, np.ndarray, AffineParams]:
    """Sample one transform and apply it identically to both images."""
    src = validate_image(src, "src")
    edited = validate_image(edited, "edited")
    if src.shape != edited.shape:
        raise ShapeError(f"pair shapes differ: {src.shape} vs {edited.shape}")
    params = sample_affine(rng_seed)
    return warp_image(src, params), warp_image(edited, params), params


@dataclass(frozen=True)
class EquivarianceReport:
    mean_deviation: float
    max_deviation: float
    tolerance: float
    n_trials: int
    deviations: tuple[float, ...]

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "mean_deviation": self.mean_deviation,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "n_trials": self.n_trials,
            "passed": self.passed,
        }


def verify_equivariance(editor, src: np.ndarray, n_trials: int = 50, tol: float = 1e-6, base_seed: int = 0) -> EquivarianceReport:
    """Measure how far `editor` is from commuting with affine warps.

    For each sampled transform g, the deviation is the mean absolute
    pixel difference between editor(g(src)) and g(editor(src)), taken
    over the region where g sampled real pixels (zero-padded pixels say
    nothing about equivariance). The editor must be deterministic and
    shape-preserving.
    """
    src = validate_image(src, "src")
    if n_trials < 1:
        raise ParameterError(f"n_trials must be >= 1, got {n_trials}")
    edited = validate_image(np.asarray(editor(src)), "editor output")
    if edited.shape != src.shape:
        raise ShapeError(f"editor changed shape: {src.shape} -> {edited.shape}")
    devs = []
    for i in range(n_trials):
        params = sample_affine(base_seed + i)
        g_then_edit = validate_image(np.asarray(editor(warp_image(src, params))), "editor output")
        edit_then_g = warp_image(edited, params)
        mask = valid_region(params)
        if not mask.any():
            devs.append(0.0)
            continue
        diff = np.abs(g_then_edit.astype(np.float64) - edit_then_g.astype(np.float64))
        devs.append(float(diff[mask].mean()))
    return EquivarianceReport(
        mean_deviation=float(np.mean(devs)),
        max_deviation=float(np.max(devs)),
        tolerance=tol,
        n_trials=n_trials,
        deviations=tuple(devs),
    )


def emit_pair_dataset(
    src: np.ndarray,
    edited: np.ndarray,
    n_items: int,
    base_seed: int,
    directory: str | Path,
) -> Path:
    """Write n_items augmented pairs plus a JSONL manifest.

    Item i uses seed base_seed + i, so emission can be fanned out across
    workers and still reproduce bit-identically.
    """
    from .container import write_tensor

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / "manifest.jsonl"
    with open(manifest_path, "w") as fh:
        for i in range(n_items):
            seed = base_seed + i
            g_src, g_edit, params = augment_pair(src, edited, seed)
            write_tensor(directory / f"item_{i:05d}_src.apft", g_src)
            write_tensor(directory / f"item_{i:05d}_edit.apft", g_edit)
            fh.write(json.dumps({"index": i, "seed": seed, "params": params.to_dict()}) + "\n")
    return manifest_path
