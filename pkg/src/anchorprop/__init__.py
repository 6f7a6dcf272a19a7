"""Anchor-based cross-frame attention engine for video feature propagation."""

__version__ = "0.1.0"

from .anchor import AnchorCache, anchor_attention, build_anchor_cache, select_anchor_indices
from .attention import (
    AttentionConfig,
    AttentionMap,
    FrameFeatures,
    QKV,
    cross_frame_attention,
    head_avg_attention_map,
    project_qkv,
    self_attention,
)
from .config import RunConfig
from .container import read_tensor, write_tensor
from .equivariance import (
    AffineParams,
    augment_pair,
    sample_affine,
    verify_equivariance,
    warp_image,
)
from .metrics import RandomProjectionEmbedder, frame_acc, tem_con
from .parallel import SegmentPlan, bench_scaling, partition_segments, run_parallel
from .propagation import EditedVideo, ToyEditNetwork, edit_frame, edit_video
from .synthdata import ClipSpec, SyntheticClip, generate_clip
from .tracking import EvalConfig, TrackQuery, TrackResult, evaluate_tracking, position_accuracy, track_point

__all__ = [
    "AnchorCache",
    "AttentionConfig",
    "AttentionMap",
    "AffineParams",
    "ClipSpec",
    "EditedVideo",
    "EvalConfig",
    "FrameFeatures",
    "QKV",
    "RandomProjectionEmbedder",
    "RunConfig",
    "SegmentPlan",
    "SyntheticClip",
    "ToyEditNetwork",
    "TrackQuery",
    "TrackResult",
    "anchor_attention",
    "augment_pair",
    "bench_scaling",
    "build_anchor_cache",
    "cross_frame_attention",
    "edit_frame",
    "edit_video",
    "evaluate_tracking",
    "frame_acc",
    "generate_clip",
    "head_avg_attention_map",
    "partition_segments",
    "position_accuracy",
    "project_qkv",
    "read_tensor",
    "run_parallel",
    "sample_affine",
    "select_anchor_indices",
    "self_attention",
    "tem_con",
    "track_point",
    "verify_equivariance",
    "warp_image",
    "write_tensor",
]
