import numpy as np
import pytest

from anchorprop.errors import ParameterError
from anchorprop.synthdata import ClipSpec, generate_clip


class TestSpecValidation:
    def test_bad_motion(self):
        with pytest.raises(ParameterError):
            ClipSpec(motion="teleport")

    def test_distinct_needs_square_dim(self):
        with pytest.raises(ParameterError):
            ClipSpec(grid=4, dim=8, distinct_tokens=True)

    def test_image_size_divisibility(self):
        with pytest.raises(ParameterError):
            ClipSpec(grid=12, image_size=250)

    def test_round_trip_dict(self):
        spec = ClipSpec(seed=3, motion="affine", rotate_deg=1.5, translate_tokens=(0.2, 0.1))
        assert ClipSpec.from_dict(spec.to_dict()) == spec


class TestZeroMotion:
    def test_frames_identical_and_map_identity(self):
        clip = generate_clip(ClipSpec(seed=1, n_frames=4, grid=8, dim=16, motion="none", image_size=64))
        for f in clip.frames[1:]:
            assert np.array_equal(f.tokens, clip.frames[0].tokens)
        dense, valid = clip.forward_map(0, 3)
        ys, xs = np.mgrid[0:64, 0:64]
        assert np.array_equal(dense[..., 0], xs.astype(np.float32))
        assert np.array_equal(dense[..., 1], ys.astype(np.float32))
        assert valid.all()


class TestShiftMotion:
    def test_integer_shift_is_cyclic_roll(self):
        spec = ClipSpec(seed=2, n_frames=3, grid=8, dim=8, motion="shift",
                        shift_tokens=(2.0, 0.0), image_size=64)
        clip = generate_clip(spec)
        g0 = clip.frames[0].tokens.reshape(8, 8, 8)
        g1 = clip.frames[1].tokens.reshape(8, 8, 8)
        g2 = clip.frames[2].tokens.reshape(8, 8, 8)
        assert np.array_equal(g1, np.roll(g0, 2, axis=1))
        assert np.array_equal(g2, np.roll(g0, 4, axis=1))

    def test_map_is_constant_offset(self):
        spec = ClipSpec(seed=2, n_frames=3, grid=8, dim=8, motion="shift",
                        shift_tokens=(2.0, 1.0), image_size=64)
        clip = generate_clip(spec)
        dense, valid = clip.forward_map(0, 1)
        assert valid.all()
        # stride 8: +2 tokens x -> +16 px, +1 token y -> +8 px, wrapped
        assert dense[0, 0, 0] == 16.0 and dense[0, 0, 1] == 8.0
        assert dense[0, 56, 0] == (56 + 16) % 64
        assert clip.target_point(0, 1, (60.0, 10.0)) == (12.0, 18.0)

    def test_fractional_shift_blends_neighbors(self):
        spec = ClipSpec(seed=3, n_frames=2, grid=4, dim=16, motion="shift",
                        shift_tokens=(0.5, 0.0), distinct_tokens=True, image_size=64)
        clip = generate_clip(spec)
        g0 = clip.frames[0].tokens.reshape(4, 4, 16)
        g1 = clip.frames[1].tokens.reshape(4, 4, 16)
        want = 0.5 * (g0 + np.roll(g0, 1, axis=1))
        np.testing.assert_allclose(g1, want, atol=1e-6)

    def test_consecutive_maps_stored(self):
        clip = generate_clip(ClipSpec(seed=4, n_frames=5, grid=8, dim=8, image_size=64))
        assert len(clip.motion) == 4
        dense, _ = clip.forward_map(2, 3)
        assert np.array_equal(clip.motion[2], dense)


class TestAffineMotion:
    def test_maps_match_composed_matrix_oracle(self):
        import math

        spec = ClipSpec(seed=5, n_frames=4, grid=8, dim=8, motion="affine",
                        rotate_deg=2.0, translate_tokens=(0.25, -0.1),
                        scale=1.01, image_size=64)
        clip = generate_clip(spec)
        dense, valid = clip.forward_map(0, 3)

        # independent composition: apply the one-step matrix three times
        th = math.radians(2.0)
        c = (8 - 1) / 2.0
        lin = 1.01 * np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        off = -lin @ [c, c] + np.array([c, c]) + np.array([0.25, -0.1])

        stride = 64 / 8
        rng = np.random.default_rng(0)
        for _ in range(30):
            px = float(rng.uniform(0, 63)), float(rng.uniform(0, 63))
            tx, ty = px[0] / stride - 0.5, px[1] / stride - 0.5
            for _ in range(3):
                tx, ty = lin[0, 0] * tx + lin[0, 1] * ty + off[0], lin[1, 0] * tx + lin[1, 1] * ty + off[1]
            want = ((tx + 0.5) * stride, (ty + 0.5) * stride)
            got = clip.target_point(0, 3, px)
            assert abs(got[0] - want[0]) < 1e-5 and abs(got[1] - want[1]) < 1e-5
        ix, iy = 33, 17
        np.testing.assert_allclose(
            dense[iy, ix], clip.target_point(0, 3, (float(ix), float(iy))), atol=1e-4
        )

    def test_frames_match_scalar_warp_oracle(self):
        spec = ClipSpec(seed=6, n_frames=3, grid=8, dim=4, motion="affine",
                        translate_tokens=(0.5, 0.0), image_size=64)
        clip = generate_clip(spec)
        base = clip.frames[0].tokens.reshape(8, 8, 4)
        g2 = clip.frames[2].tokens.reshape(8, 8, 4)
        # pure translation by 1.0 token after two steps: content shifts right,
        # zero padding enters on the left
        want = np.zeros_like(base)
        want[:, 1:] = base[:, :-1]
        np.testing.assert_allclose(g2, want, atol=1e-6)

    def test_exiting_bounds_entirely_rejected(self):
        with pytest.raises(ParameterError):
            generate_clip(ClipSpec(seed=7, n_frames=5, grid=8, dim=8, motion="affine",
                                   translate_tokens=(4.0, 0.0), image_size=64))

    def test_validity_masks_edges(self):
        spec = ClipSpec(seed=8, n_frames=2, grid=8, dim=8, motion="affine",
                        translate_tokens=(1.0, 0.0), image_size=64)
        clip = generate_clip(spec)
        _, valid = clip.forward_map(0, 1)
        assert not valid.all()
        assert valid[32, 32]


class TestDeterminism:
    def test_regeneration_is_bit_identical(self):
        spec = ClipSpec(seed=9, n_frames=4, grid=8, dim=16, motion="shift",
                        shift_tokens=(1.5, 0.5), image_size=64)
        a = generate_clip(spec)
        b = generate_clip(spec)
        for fa, fb in zip(a.frames, b.frames):
            assert fa.tokens.tobytes() == fb.tokens.tobytes()

    def test_distinct_tokens_are_one_hot(self):
        clip = generate_clip(ClipSpec(seed=10, n_frames=1, grid=4, dim=16,
                                      distinct_tokens=True, motion="none", image_size=64))
        assert np.array_equal(clip.frames[0].tokens, np.eye(16, dtype=np.float32))

    def test_values_bounded(self):
        clip = generate_clip(ClipSpec(seed=11, n_frames=3, grid=8, dim=8, image_size=64))
        for f in clip.frames:
            assert f.tokens.min() >= -1.0 and f.tokens.max() <= 1.0
