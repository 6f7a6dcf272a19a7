import json
import math

import numpy as np
import pytest

from anchorprop.container import read_tensor
from anchorprop.equivariance import (
    AffineParams,
    augment_pair,
    emit_pair_dataset,
    sample_affine,
    valid_region,
    verify_equivariance,
    warp_image,
)
from anchorprop.errors import BoundsError, ParameterError, ShapeError


def texture(seed, size, channels=3):
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.0, 1.0, size=(size // 4, size // 4, channels))
    return np.repeat(np.repeat(coarse, 4, axis=0), 4, axis=1).astype(np.float32)


def identity_params(size):
    return AffineParams(
        rotation_deg=0.0,
        translate_frac=(0.0, 0.0),
        scale=1.0,
        shear_deg=(0.0, 0.0),
        resize_to=size,
        crop_size=size,
        crop_offset=(0, 0),
    )


class TestSampleAffine:
    def test_ranges(self):
        for seed in range(200):
            p = sample_affine(seed)
            assert abs(p.rotation_deg) < 5.0
            assert all(abs(t) <= 0.05 for t in p.translate_frac)
            assert 0.95 <= p.scale <= 1.05
            assert all(abs(s) <= 5.0 for s in p.shear_deg)
            assert p.resize_to == 288 and p.crop_size == 256
            ox, oy = p.crop_offset
            assert 0 <= ox <= 32 and 0 <= oy <= 32

    def test_deterministic(self):
        assert sample_affine(123) == sample_affine(123)
        assert sample_affine(123) != sample_affine(124)

    def test_monte_carlo_means(self):
        n = 10_000
        params = [sample_affine(s) for s in range(n)]
        assert abs(np.mean([p.scale for p in params]) - 1.0) < 0.005
        assert abs(np.mean([p.rotation_deg for p in params])) < 0.1
        assert abs(np.mean([p.crop_offset[0] for p in params]) - 16.0) < 0.33

    def test_invariant_violations_rejected(self):
        with pytest.raises(ParameterError):
            AffineParams(6.0, (0.0, 0.0), 1.0, (0.0, 0.0))
        with pytest.raises(ParameterError):
            AffineParams(0.0, (0.1, 0.0), 1.0, (0.0, 0.0))
        with pytest.raises(ParameterError):
            AffineParams(0.0, (0.0, 0.0), 0.5, (0.0, 0.0))
        with pytest.raises(ParameterError):
            AffineParams(0.0, (0.0, 0.0), 1.0, (9.0, 0.0))
        with pytest.raises(ParameterError):
            AffineParams(0.0, (0.0, 0.0), 1.0, (0.0, 0.0), resize_to=100, crop_size=120)

    def test_round_trip_dict(self):
        p = sample_affine(5)
        assert AffineParams.from_dict(p.to_dict()) == p


class TestWarpImage:
    def test_identity_is_bit_exact(self):
        img = texture(0, 32)
        out = warp_image(img, identity_params(32))
        assert np.array_equal(out, img)

    def test_integer_translation_moves_hot_pixel(self):
        size = 24
        img = np.zeros((size, size, 1), np.float32)
        img[12, 10, 0] = 1.0
        p = AffineParams(
            rotation_deg=0.0,
            translate_frac=(1.0 / size, 0.0),
            scale=1.0,
            shear_deg=(0.0, 0.0),
            resize_to=size,
            crop_size=size,
            crop_offset=(0, 0),
        )
        out = warp_image(img, p)
        assert out[12, 11, 0] == pytest.approx(1.0, abs=1e-6)
        assert out.sum() == pytest.approx(1.0, abs=1e-5)

    def test_matches_scalar_inverse_map_oracle(self):
        size = 16
        img = texture(1, size, channels=1)
        p = AffineParams(
            rotation_deg=3.0,
            translate_frac=(0.02, -0.03),
            scale=0.97,
            shear_deg=(2.0, -1.0),
            resize_to=size,
            crop_size=12,
            crop_offset=(2, 1),
        )
        out = warp_image(img, p)

        inv = np.linalg.inv(p.matrix())
        want = np.zeros((12, 12), dtype=np.float64)
        for oy in range(12):
            for ox in range(12):
                dx, dy = ox + p.crop_offset[0], oy + p.crop_offset[1]
                sx = inv[0, 0] * dx + inv[0, 1] * dy + inv[0, 2]
                sy = inv[1, 0] * dx + inv[1, 1] * dy + inv[1, 2]
                x0, y0 = math.floor(sx), math.floor(sy)
                fx, fy = sx - x0, sy - y0
                acc = 0.0
                for (yy, xx, w) in [
                    (y0, x0, (1 - fx) * (1 - fy)),
                    (y0, x0 + 1, fx * (1 - fy)),
                    (y0 + 1, x0, (1 - fx) * fy),
                    (y0 + 1, x0 + 1, fx * fy),
                ]:
                    if 0 <= yy < size and 0 <= xx < size:
                        acc += w * float(img[yy, xx, 0])
                want[oy, ox] = acc
        np.testing.assert_allclose(out[..., 0], want, atol=1e-5)

    def test_output_range(self):
        img = texture(2, 32)
        for seed in range(5):
            p = sample_affine(seed)
            out = warp_image(img, p)
            assert out.shape == (256, 256, 3)
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_rejects_bad_pixel_range(self):
        img = np.full((8, 8, 1), 1.5, np.float32)
        with pytest.raises(BoundsError):
            warp_image(img, identity_params(8))


class TestAugmentPair:
    def test_equal_inputs_equal_outputs(self):
        img = texture(3, 32)
        a, b, _ = augment_pair(img, img.copy(), rng_seed=7)
        assert np.array_equal(a, b)

    def test_identical_transform_both_images(self):
        src = texture(4, 32)
        edited = (1.0 - src).astype(np.float32)
        a, b, params = augment_pair(src, edited, rng_seed=8)
        assert np.array_equal(a, warp_image(src, params))
        assert np.array_equal(b, warp_image(edited, params))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            augment_pair(texture(5, 32), texture(5, 16), rng_seed=0)

    def test_seed_determinism(self):
        src = texture(6, 32)
        edited = (src * 0.5).astype(np.float32)
        a1, b1, p1 = augment_pair(src, edited, rng_seed=9)
        a2, b2, p2 = augment_pair(src, edited, rng_seed=9)
        assert p1 == p2
        assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


class TestVerifyEquivariance:
    def test_identity_editor_zero_deviation(self):
        report = verify_equivariance(lambda img: img, texture(7, 64), n_trials=10)
        assert report.max_deviation == 0.0
        assert report.passed

    def test_pointwise_inversion_commutes(self):
        report = verify_equivariance(
            lambda img: (1.0 - img).astype(np.float32), texture(8, 64), n_trials=10, tol=1e-6
        )
        assert report.max_deviation <= 1e-6

    def test_flip_editor_fails(self):
        report = verify_equivariance(
            lambda img: np.ascontiguousarray(img[:, ::-1, :]),
            texture(9, 64),
            n_trials=10,
            tol=1e-6,
        )
        assert report.max_deviation > 0.01
        assert not report.passed

    def test_flip_vs_translation_on_one_hot(self):
        # hand-check: flipping then translating differs from translating
        # then flipping whenever the translation is nonzero
        size = 64
        img = np.zeros((size, size, 1), np.float32)
        img[32, 40, 0] = 1.0
        flip = lambda im: np.ascontiguousarray(im[:, ::-1, :])
        report = verify_equivariance(flip, img, n_trials=20, tol=1e-6)
        assert report.max_deviation > 0.0


class TestDatasetEmission:
    def test_emit_and_reproduce(self, tmp_path):
        src = texture(10, 32)
        edited = (1.0 - src).astype(np.float32)
        manifest = emit_pair_dataset(src, edited, n_items=4, base_seed=100, directory=tmp_path)
        lines = [json.loads(line) for line in manifest.read_text().splitlines()]
        assert [line["index"] for line in lines] == [0, 1, 2, 3]
        assert [line["seed"] for line in lines] == [100, 101, 102, 103]
        for line in lines:
            params = AffineParams.from_dict(line["params"])
            assert params == sample_affine(line["seed"])
            stored = read_tensor(tmp_path / f"item_{line['index']:05d}_src.apft")
            assert np.array_equal(stored, warp_image(src, params))

    def test_valid_region_shrinks_with_translation(self):
        p = AffineParams(0.0, (0.05, 0.0), 1.0, (0.0, 0.0))
        mask = valid_region(p)
        assert mask.shape == (256, 256)
        assert not mask.all()
        assert mask.any()
