"""Command-line surface tying the engine together.

Subcommands:

    gen                  render a synthetic clip to a directory
    edit                 edit a clip (independent or anchored, optionally parallel)
    track                attention-score tracking evaluation -> CSV + figure
    augment              emit an augmented image-pair dataset + manifest
    verify-equivariance  measure editor/warp commutation -> JSON report
    metrics              temporal-consistency metrics -> JSON (+ CSV, figure)
    bench                parallel scaling benchmark -> JSON + figure

Every run writes a provenance sidecar sufficient to reproduce it from
(config, seed). Exit codes: 0 success, 1 usage error, 2 data/validation
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attention import FrameFeatures
from .config import RunConfig
from .container import read_tensor, write_tensor
from .equivariance import emit_pair_dataset, verify_equivariance
from .errors import CompatibilityError, EngineError, ParameterError
from .metrics import RandomProjectionEmbedder, compute_metrics
from .parallel import bench_scaling, run_parallel
from .propagation import edit_video
from .synthdata import ClipSpec, SyntheticClip, generate_clip
from .tracking import EvalConfig, evaluate_tracking, write_tracking_csv


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 on usage errors (2 is for data errors)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip() != "")


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip() != "")


def _write_provenance(directory: Path, command: str, payload: dict) -> None:
    payload = {"command": command, "version": __version__, **payload}
    (directory / "provenance.json").write_text(json.dumps(payload, indent=2))


def _save_clip(clip: SyntheticClip, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    g = clip.spec.grid
    stacked = np.stack([f.tokens.reshape(g, g, clip.spec.dim) for f in clip.frames])
    write_tensor(directory / "frames.apft", stacked)
    (directory / "clip.json").write_text(
        json.dumps({"spec": clip.spec.to_dict(), "version": __version__}, indent=2)
    )


def _load_clip_frames(directory: Path) -> list[FrameFeatures]:
    arr = read_tensor(directory / "frames.apft")
    if arr.ndim != 4:
        raise CompatibilityError(f"expected 4-D clip tensor, got {arr.shape}")
    n, h, w, dim = arr.shape
    return [FrameFeatures(i, h, w, arr[i].reshape(h * w, dim)) for i in range(n)]


def _load_clip_with_truth(directory: Path) -> SyntheticClip:
    meta = json.loads((directory / "clip.json").read_text())
    clip = generate_clip(ClipSpec.from_dict(meta["spec"]))
    stored = read_tensor(directory / "frames.apft")
    g = clip.spec.grid
    regenerated = np.stack([f.tokens.reshape(g, g, clip.spec.dim) for f in clip.frames])
    if stored.tobytes() != regenerated.tobytes():
        raise CompatibilityError(
            f"{directory}: stored frames do not match regeneration from clip.json"
        )
    return clip


def _demo_image(seed: int, size: int, channels: int = 3) -> np.ndarray:
    """Seeded blocky texture in [0, 1] with structure on several scales."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.0, 1.0, size=(size // 8, size // 8, channels))
    img = np.repeat(np.repeat(coarse, 8, axis=0), 8, axis=1)
    img += rng.uniform(-0.08, 0.08, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


EDITORS = {
    "identity": lambda img: img,
    "invert": lambda img: (1.0 - img).astype(np.float32),
    "flip": lambda img: np.ascontiguousarray(img[:, ::-1, :]),
}


def cmd_gen(args) -> int:
    spec = ClipSpec(
        seed=args.seed,
        n_frames=args.frames,
        grid=args.grid,
        dim=args.grid * args.grid if args.distinct else args.dim,
        motion=args.motion,
        shift_tokens=(args.shift_x, args.shift_y),
        distinct_tokens=args.distinct,
        image_size=args.image_size,
        rotate_deg=args.rotate_deg,
        translate_tokens=(args.translate_x, args.translate_y),
        scale=args.scale,
    )
    clip = generate_clip(spec)
    out = Path(args.out)
    _save_clip(clip, out)
    _write_provenance(out, "gen", {"spec": spec.to_dict()})
    print(f"wrote {clip.n_frames} frames to {out}")
    return 0


def cmd_edit(args) -> int:
    frames = _load_clip_frames(Path(args.clip))
    cfg = RunConfig(
        seed=args.net_seed,
        frames=len(frames),
        grid=frames[0].grid_h,
        dim=frames[0].dim,
        heads=args.heads,
        steps=args.steps,
        anchors=args.anchors,
        workers=args.workers,
        mode=args.mode,
        pyramid=args.pyramid,
    )
    network = cfg.network()
    if cfg.mode == "anchored" and cfg.workers > 1:
        video = run_parallel(frames, network, num_anchors=cfg.anchors, n_workers=cfg.workers)
    else:
        video = edit_video(frames, network, mode=cfg.mode, num_anchors=cfg.anchors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "edited.apft", video.stacked())
    _write_provenance(
        out, "edit", {"config": cfg.to_dict(), "config_hash": cfg.config_hash,
                      "run": video.provenance},
    )
    print(f"edited {video.n_frames} frames ({video.mode}) -> {out}")
    return 0


def cmd_track(args) -> int:
    clip = _load_clip_with_truth(Path(args.clip))
    cfg = RunConfig(
        seed=args.net_seed,
        frames=clip.n_frames,
        grid=clip.spec.grid,
        dim=clip.spec.dim,
        heads=args.heads,
        steps=args.steps,
        pyramid=args.pyramid,
        thresholds=args.deltas,
        image_size=clip.spec.image_size,
    )
    network = cfg.network()
    eval_cfg = EvalConfig(
        image_size=clip.spec.image_size,
        thresholds=cfg.thresholds,
        layers=args.layers,
        steps=args.eval_steps,
        query_grid=args.query_grid,
        pair_strides=args.pair_strides,
    )
    rows = evaluate_tracking(clip, network, eval_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tracking_csv(rows, out / "tracking.csv")
    from .plots import render_tracking_figure

    render_tracking_figure(rows, out / "tracking.png")
    _write_provenance(
        out, "track", {"config": cfg.to_dict(), "config_hash": cfg.config_hash,
                       "clip_spec": clip.spec.to_dict()},
    )
    print(f"wrote {len(rows)} table rows -> {out}")
    return 0


def cmd_augment(args) -> int:
    if args.source is not None:
        src = read_tensor(Path(args.source))
        edited = read_tensor(Path(args.edited)) if args.edited else (1.0 - src).astype(np.float32)
    else:
        src = _demo_image(args.seed, args.size)
        edited = EDITORS["invert"](src)
    out = Path(args.out)
    manifest = emit_pair_dataset(src, edited, args.n_items, args.seed, out)
    _write_provenance(out, "augment", {"n_items": args.n_items, "base_seed": args.seed})
    print(f"wrote {args.n_items} pairs, manifest {manifest}")
    return 0


def cmd_verify_equivariance(args) -> int:
    if args.editor not in EDITORS:
        raise ParameterError(f"unknown editor {args.editor!r}; choices: {sorted(EDITORS)}")
    src = _demo_image(args.seed, args.size)
    report = verify_equivariance(
        EDITORS[args.editor], src, n_trials=args.trials, tol=args.tol, base_seed=args.seed
    )
    payload = {"editor": args.editor, **report.to_dict()}
    text = json.dumps(payload, indent=2)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "equivariance.json").write_text(text)
        _write_provenance(out, "verify-equivariance", {"editor": args.editor,
                                                       "seed": args.seed,
                                                       "trials": args.trials})
    print(text)
    return 0


def cmd_metrics(args) -> int:
    arr = read_tensor(Path(args.video))
    if arr.ndim < 2:
        raise CompatibilityError(f"expected frame stack, got shape {arr.shape}")
    frames = [arr[i] for i in range(arr.shape[0])]
    embedder = RandomProjectionEmbedder(seed=args.emb_seed, out_dim=args.emb_dim)
    source_ref = read_tensor(Path(args.source_ref)).ravel() if args.source_ref else None
    target_ref = read_tensor(Path(args.target_ref)).ravel() if args.target_ref else None
    if args.embeddings:
        from .metrics import (
            MetricsReport,
            frame_acc_from_embeddings,
            pair_similarities_from_embeddings,
        )

        emb = read_tensor(Path(args.embeddings))
        sims = pair_similarities_from_embeddings(emb)
        acc = (
            frame_acc_from_embeddings(emb, source_ref, target_ref)
            if source_ref is not None and target_ref is not None
            else None
        )
        report = MetricsReport(
            tem_con=float(np.mean(sims)),
            frame_acc=acc,
            pair_similarities=tuple(sims),
            provenance={"embeddings": str(args.embeddings)},
        )
    else:
        report = compute_metrics(
            frames,
            embedder,
            source_ref=source_ref,
            target_ref=target_ref,
            provenance={"video": str(args.video), "emb_seed": args.emb_seed,
                        "emb_dim": args.emb_dim},
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2))
    with open(out / "pair_similarities.csv", "w") as fh:
        fh.write("pair,similarity\n")
        for i, s in enumerate(report.pair_similarities):
            fh.write(f"{i},{s}\n")
    from .plots import render_similarity_figure

    render_similarity_figure(report.pair_similarities, out / "pair_similarities.png")
    _write_provenance(out, "metrics", {"video": str(args.video)})
    print(json.dumps({"tem_con": report.tem_con, "frame_acc": report.frame_acc}))
    return 0


def cmd_bench(args) -> int:
    spec = ClipSpec(
        seed=args.seed,
        n_frames=args.frames,
        grid=args.grid,
        dim=args.dim,
        motion="shift",
        shift_tokens=(1.0, 0.5),
    )
    clip = generate_clip(spec)
    cfg = RunConfig(
        seed=args.net_seed,
        frames=args.frames,
        grid=args.grid,
        dim=args.dim,
        heads=args.heads,
        steps=args.steps,
        anchors=args.anchors,
    )
    network = cfg.network()
    rows = bench_scaling(
        clip.frames, network, num_anchors=cfg.anchors, worker_counts=args.workers
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    import os

    payload = {"host_cpus": os.cpu_count(), "config": cfg.to_dict(), "rows": rows}
    (out / "bench.json").write_text(json.dumps(payload, indent=2))
    from .plots import render_bench_figure

    render_bench_figure(rows, out / "bench.png")
    _write_provenance(out, "bench", {"config": cfg.to_dict(),
                                     "config_hash": cfg.config_hash})
    for r in rows:
        print(f"workers {r['workers']}: {r['frames_per_sec']:.2f} frames/s")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="anchorprop", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", default=None, help="JSON file of flag defaults (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic clip")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--motion", choices=["none", "shift", "affine"], default="shift")
    p.add_argument("--shift-x", type=float, default=1.0)
    p.add_argument("--shift-y", type=float, default=0.0)
    p.add_argument("--distinct", action="store_true",
                   help="one-hot token features (dim becomes grid^2)")
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--rotate-deg", type=float, default=0.0)
    p.add_argument("--translate-x", type=float, default=0.0)
    p.add_argument("--translate-y", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("edit", help="edit a clip")
    p.add_argument("--clip", required=True, help="directory written by gen")
    p.add_argument("--mode", choices=["independent", "anchored"], default="anchored")
    p.add_argument("--anchors", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--net-seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--pyramid", type=_int_list, default=None,
                   help="comma-separated attention grid sizes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("track", help="tracking evaluation -> CSV + figure")
    p.add_argument("--clip", required=True)
    p.add_argument("--net-seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--pyramid", type=_int_list, default=None)
    p.add_argument("--layers", type=_int_list, default=None)
    p.add_argument("--eval-steps", type=_int_list, default=None)
    p.add_argument("--deltas", type=_float_list, default=(16.0, 32.0))
    p.add_argument("--query-grid", type=int, default=16)
    p.add_argument("--pair-strides", type=_int_list, default=(1, 4))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("augment", help="emit an augmented pair dataset")
    p.add_argument("--n-items", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--source", default=None, help="source image container")
    p.add_argument("--edited", default=None, help="edited image container")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("verify-equivariance", help="editor/warp commutation report")
    p.add_argument("--editor", default="invert", help=f"one of {sorted(EDITORS)}")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify_equivariance)

    p = sub.add_parser("metrics", help="temporal-consistency metrics")
    p.add_argument("--video", required=True, help="frame-stack container (e.g. edited.apft)")
    p.add_argument("--embeddings", default=None,
                   help="precomputed (n_frames, dim) embedding container")
    p.add_argument("--emb-seed", type=int, default=0)
    p.add_argument("--emb-dim", type=int, default=64)
    p.add_argument("--source-ref", default=None)
    p.add_argument("--target-ref", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="parallel scaling benchmark")
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--anchors", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--net-seed", type=int, default=7)
    p.add_argument("--workers", type=_int_list, default=(1, 2, 4, 8))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    # two-phase parse so --config supplies defaults that explicit flags override
    probe = _Parser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config:
        try:
            overrides = json.loads(Path(known.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {known.config}: {exc}", file=sys.stderr)
            return 2
        for action in parser._subparsers._group_actions:
            for sub_parser in getattr(action, "choices", {}).values():
                valid = {a.dest for a in sub_parser._actions}
                sub_parser.set_defaults(**{k: v for k, v in overrides.items() if k in valid})
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
