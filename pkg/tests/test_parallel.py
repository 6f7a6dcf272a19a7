import numpy as np
import pytest

from anchorprop.anchor import select_anchor_indices
from anchorprop.attention import FrameFeatures
from anchorprop.errors import JobError, ParameterError
from anchorprop.parallel import SegmentPlan, bench_scaling, partition_segments, run_parallel
from anchorprop.propagation import ToyEditNetwork, edit_video
from anchorprop.synthdata import ClipSpec, generate_clip


class TestPartitionSegments:
    def test_spec_example_120_8_3(self):
        anchors = select_anchor_indices(120, 3)
        plan = partition_segments(120, 8, anchors)
        sizes = [b - a for a, b in plan.segments]
        assert sorted(sizes, reverse=True) == [15] * 5 + [14] * 3
        assert sum(sizes) == 117

    def test_single_worker_covers_everything(self):
        plan = partition_segments(10, 1, [0, 9])
        assert plan.segments == ((0, 8),)
        assert plan.segment_frames(0) == (1, 2, 3, 4, 5, 6, 7, 8)

    def test_more_workers_than_frames(self):
        plan = partition_segments(4, 8, [0])
        assert len(plan.segments) == 8
        covered = [i for s in range(8) for i in plan.segment_frames(s)]
        assert covered == [1, 2, 3]

    def test_union_is_exact_cover(self):
        for n in (1, 5, 24, 61):
            for w in (1, 2, 3, 8):
                for k in range(1, min(n, 5) + 1):
                    anchors = select_anchor_indices(n, k)
                    plan = partition_segments(n, w, anchors)
                    covered = set(anchors)
                    for s in range(len(plan.segments)):
                        for i in plan.segment_frames(s):
                            assert i not in covered
                            covered.add(i)
                    assert covered == set(range(n))
                    sizes = [b - a for a, b in plan.segments]
                    assert max(sizes) - min(sizes) <= 1

    def test_deterministic(self):
        a = partition_segments(50, 4, [0, 25, 49])
        b = partition_segments(50, 4, [0, 25, 49])
        assert a == b

    def test_zero_workers_rejected(self):
        with pytest.raises(ParameterError):
            partition_segments(10, 0, [])

    def test_plan_validation(self):
        with pytest.raises(ParameterError):
            SegmentPlan(4, 1, (0,), (1, 2, 3), ((0, 2),))


def small_clip(n_frames=9, seed=0):
    spec = ClipSpec(seed=seed, n_frames=n_frames, grid=8, dim=16, motion="shift",
                    shift_tokens=(1.0, 0.5), image_size=64)
    return generate_clip(spec)


class TestRunParallel:
    def test_one_worker_matches_edit_video_bitwise(self):
        clip = small_clip()
        net = ToyEditNetwork.create(seed=1, grid=8, dim=16, steps=3)
        serial = edit_video(clip.frames, net, mode="anchored", num_anchors=3)
        par = run_parallel(clip.frames, net, num_anchors=3, n_workers=1)
        for a, b in zip(serial.frames, par.frames):
            assert a.tokens.tobytes() == b.tokens.tobytes()

    def test_worker_counts_bit_identical(self):
        clip = small_clip()
        net = ToyEditNetwork.create(seed=2, grid=8, dim=16, steps=3)
        outputs = [
            run_parallel(clip.frames, net, num_anchors=3, n_workers=w)
            for w in (1, 2, 4)
        ]
        base = outputs[0]
        for other in outputs[1:]:
            for a, b in zip(base.frames, other.frames):
                assert a.tokens.tobytes() == b.tokens.tobytes()

    def test_provenance_records_workers(self):
        clip = small_clip()
        net = ToyEditNetwork.create(seed=3, grid=8, dim=16, steps=2)
        video = run_parallel(clip.frames, net, num_anchors=2, n_workers=4)
        assert video.provenance["n_workers"] == 4
        assert video.provenance["anchor_indices"] == [0, 8]

    def test_worker_failure_names_segment(self):
        clip = small_clip(n_frames=5)
        net = ToyEditNetwork.create(seed=4, grid=8, dim=16, steps=2)
        frames = list(clip.frames)
        bad = np.random.default_rng(0).standard_normal((16, 16)).astype(np.float32)
        frames[0] = FrameFeatures(0, 4, 4, bad)  # wrong grid for the network
        with pytest.raises(JobError, match="segment"):
            run_parallel(frames, net, num_anchors=1, n_workers=2)

    def test_empty_clip_rejected(self):
        net = ToyEditNetwork.create(seed=5, grid=8, dim=16)
        with pytest.raises(ParameterError):
            run_parallel([], net)


class TestBenchScaling:
    def test_rows_have_required_fields(self):
        clip = small_clip(n_frames=6)
        net = ToyEditNetwork.create(seed=6, grid=8, dim=16, steps=2)
        rows = bench_scaling(clip.frames, net, num_anchors=2, worker_counts=(1, 2))
        assert [r["workers"] for r in rows] == [1, 2]
        for r in rows:
            assert r["frames"] == 6
            assert r["wall_ms"] > 0
            assert r["frames_per_sec"] == pytest.approx(6 / (r["wall_ms"] / 1e3), rel=1e-6)
