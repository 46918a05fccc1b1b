"""Command-line interface.

Subcommands cover the full synthetic protocol: ``generate`` scene bundles,
``estimate`` a single reference/query pair, ``track`` a whole sequence,
``vote`` across reference views, ``eval`` a run against ground truth and
``report`` plots/tables from an evaluation.

Every JSON written by a subcommand embeds the toolkit version, the resolved
configuration and the seed, so results are reproducible from the file
alone. Wall-clock fields are suppressed with --no-timing, making reruns
byte-identical; worker fan-out (--jobs) never changes outputs, only speed.
Predictions come from the geometric oracle predictor plus the configured
corruption; a learned predictor can be swapped in through the library API.

The seed defaults to the ROC_POSE_SEED environment variable, then 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import RocPoseError
from .geometry import Pose, compose, invert, relative_pose
from .metrics import compute_report
from .multiview import ReferenceSet, best_view_oracle, vote as run_vote
from .predictor import CorruptionConfig, oracle_predict
from .roc import build_reference_roc, encode_roc_image, save_roc_image
from .scenes import (
    PairSpec,
    default_intrinsics,
    load_bundle,
    make_object,
    make_sequence,
    save_bundle,
)
from .solvers import RansacConfig, pose_error, solve_pair
from .tracking import _frame_seed, summarize_track, track_sequence


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ROC_POSE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise RocPoseError(f"ROC_POSE_SEED must be an integer, got {env!r}") from e
    return 0


def _header(command: str, seed: int, config: dict) -> dict:
    return {
        "toolkit": {"name": "rocpose", "version": __version__},
        "command": command,
        "seed": seed,
        "config": config,
    }


def _write_json(path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    )


def _finite_or_none(x):
    return float(x) if x is not None and np.isfinite(x) else None


def _parse_range(text: str) -> tuple:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return (float(lo), float(hi))
    v = float(text)
    return (v, v)


def _parse_occluder(text: str | None):
    if text is None:
        return None
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise RocPoseError("--occluder expects u0,v0,width,height")
    return tuple(parts)


def _corruption_from(args, seed: int) -> CorruptionConfig:
    return CorruptionConfig(
        coord_noise_sigma=args.sigma,
        pixel_dropout=args.dropout,
        occluder=_parse_occluder(args.occluder),
        quantize_8bit=args.quantize,
        seed=seed,
    )


def _ransac_from(args, seed: int) -> RansacConfig:
    return RansacConfig(
        iterations=args.ransac_iters,
        inlier_px=args.inlier_px,
        min_inliers=args.min_inliers,
        seed=seed,
    )


def _add_corruption_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("predictor corruption")
    g.add_argument("--sigma", type=float, default=0.0,
                   help="coordinate noise std dev in ROC units")
    g.add_argument("--dropout", type=float, default=0.0,
                   help="probability of dropping each valid pixel")
    g.add_argument("--occluder", default=None, metavar="U0,V0,W,H",
                   help="rectangle of predictions to invalidate")
    g.add_argument("--quantize", action="store_true",
                   help="round-trip predictions through the 8-bit codec")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--solver", choices=("umeyama", "ransac_pnp"),
                   default="umeyama")
    g.add_argument("--allow-scale", action="store_true",
                   help="fit a diagnostic similarity scale (umeyama only)")
    g.add_argument("--max-pairs", type=int, default=20000,
                   help="seeded subsample cap on correspondences")
    g.add_argument("--ransac-iters", type=int, default=1024)
    g.add_argument("--inlier-px", type=float, default=2.0)
    g.add_argument("--min-inliers", type=int, default=12)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="run seed (default: ROC_POSE_SEED env var, then 0)")
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall-clock fields for byte-identical reruns")


def _config_dict(args, skip=("seed", "no_timing", "out", "bundle", "func")) -> dict:
    return {
        k: v for k, v in sorted(vars(args).items())
        if k not in skip and k != "command"
    }


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    seed = _resolve_seed(args)
    start = time.perf_counter()
    model = make_object(
        args.kind, size_m=args.size, samples=args.samples, seed=seed,
        render_samples=args.render_samples,
    )
    spec = PairSpec(
        rotation_gap_deg=_parse_range(args.gap_deg),
        translation_gap_m=_parse_range(args.trans_gap),
        occlusion=args.occlusion,
        depth_noise_m=args.noise,
        seed=seed,
        distance_m=args.distance,
        intrinsics=default_intrinsics(args.image_size, args.image_size, args.focal),
    )
    bundle = make_sequence(model, args.frames, spec)
    save_bundle(bundle, args.out)
    record = _header("generate", seed, _config_dict(args))
    record["result"] = {
        "frames": len(bundle.frames),
        "mask_pixels": [int(f.mask.sum()) for f in bundle.frames],
        "object_diameter_m": float(model.diameter),
        "out": str(args.out),
    }
    if not args.no_timing:
        record["timing_s"] = {"total": time.perf_counter() - start}
    _write_json(Path(args.out) / "generate.json", record)
    print(f"wrote {args.frames} frames to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# estimate


def cmd_estimate(args) -> int:
    seed = _resolve_seed(args)
    start = time.perf_counter()
    bundle = load_bundle(args.bundle)
    n = len(bundle.frames)
    if not (0 <= args.reference < n and 0 <= args.query < n):
        raise RocPoseError(
            f"frame indices out of range for a {n}-frame bundle"
        )
    reference = bundle.frames[args.reference]
    query = bundle.frames[args.query]
    _, s = build_reference_roc(reference)
    gt_rel = relative_pose(reference.world_pose, query.world_pose)
    pred = oracle_predict(query, gt_rel, s, _corruption_from(args, seed))
    if args.save_roc:
        mode = "float" if str(args.save_roc).endswith(".pfm") else "8bit"
        save_roc_image(encode_roc_image(pred, mode), args.save_roc)
    est = solve_pair(
        pred, query, s, solver=args.solver, ransac=_ransac_from(args, seed),
        allow_scale=args.allow_scale, max_pairs=args.max_pairs,
        subsample_seed=seed,
    )
    rot_deg, trans_m = pose_error(est, gt_rel)

    payload = _header("estimate", seed, _config_dict(args))
    payload["result"] = {
        "estimate": est.to_dict(),
        "gt_relative": gt_rel.matrix.tolist(),
        "rotation_error_deg": rot_deg,
        "translation_error_m": trans_m,
        "scale_transform": s.to_dict(),
        "valid_predictions": int(pred.valid.sum()),
    }
    if not args.no_timing:
        payload["timing_s"] = {"total": time.perf_counter() - start}
    _write_json(args.out, payload)
    print(
        f"estimate [{est.method}] rot_err={rot_deg:.6f} deg "
        f"trans_err={trans_m:.6f} m -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# track


def cmd_track(args) -> int:
    seed = _resolve_seed(args)
    start = time.perf_counter()
    bundle = load_bundle(args.bundle)
    run = track_sequence(
        bundle,
        corruption=_corruption_from(args, seed),
        solver=args.solver,
        ransac=_ransac_from(args, seed),
        max_pairs=args.max_pairs,
        jobs=args.jobs,
    )
    frames = []
    for i, (est, gt_rel, err, failure) in enumerate(
        zip(run.estimates, run.gt_relatives, run.errors, run.failures)
    ):
        row = {
            "index": i,
            "estimate": est.to_dict() if est is not None else None,
            "gt_relative": gt_rel.matrix.tolist(),
            "rotation_error_deg": err[0] if err else None,
            "translation_error_m": err[1] if err else None,
            "failure": failure,
        }
        if not args.no_timing:
            row["seconds"] = run.timings_s[i]
        frames.append(row)

    solved = [e for e in run.errors if e is not None]
    # jobs is an execution detail like timing: it never changes the
    # estimates, so it stays out of the reproducibility header.
    payload = _header("track", seed, _config_dict(args, skip=(
        "seed", "no_timing", "out", "bundle", "func", "jobs"
    )))
    payload["frames"] = frames
    payload["summary"] = {
        "frames": len(frames),
        "miss_count": run.miss_count,
        "miss_rate_percent": run.miss_rate_percent,
        "median_rotation_error_deg": (
            float(np.median([e[0] for e in solved])) if solved else None
        ),
        "median_translation_error_m": (
            float(np.median([e[1] for e in solved])) if solved else None
        ),
    }
    if not args.no_timing:
        payload["timing_s"] = {
            "total": time.perf_counter() - start,
            "mean_per_frame": float(np.mean(run.timings_s)),
        }
    _write_json(args.out, payload)
    print(
        f"tracked {len(frames)} frames, miss rate "
        f"{run.miss_rate_percent:.1f}% -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# vote


def cmd_vote(args) -> int:
    seed = _resolve_seed(args)
    start = time.perf_counter()
    bundle = load_bundle(args.bundle)
    n = len(bundle.frames)
    query_index = args.query_index if args.query_index >= 0 else n - 1
    if not 0 <= query_index < n or n < 2:
        raise RocPoseError("vote needs a valid query index and >= 2 frames")
    query = bundle.frames[query_index]
    ref_indices = [i for i in range(n) if i != query_index]
    ref_frames = [bundle.frames[i] for i in ref_indices]

    if args.estimates:
        raw = json.loads(Path(args.estimates).read_text())
        rows = raw["estimates"] if isinstance(raw, dict) else raw
        by_index = {int(r["reference_index"]): r for r in rows}
        missing = [i for i in ref_indices if i not in by_index]
        if missing:
            raise RocPoseError(
                f"estimates file lacks reference indices {missing}"
            )
        from .solvers import PoseEstimate

        estimates = [
            PoseEstimate(
                pose=Pose.from_matrix(np.array(by_index[i]["pose"])),
                inlier_count=int(by_index[i].get("inlier_count", 0)),
                residual_rms=float(by_index[i].get("residual_rms", 0.0)),
                method=str(by_index[i].get("method", "external")),
            )
            for i in ref_indices
        ]
    else:
        estimates = []
        for i, frame in zip(ref_indices, ref_frames):
            _, s_i = build_reference_roc(frame)
            gt_rel = relative_pose(frame.world_pose, query.world_pose)
            cfg_i = _corruption_from(args, _frame_seed(seed, i))
            pred = oracle_predict(query, gt_rel, s_i, cfg_i)
            estimates.append(
                solve_pair(
                    pred, query, s_i, solver=args.solver,
                    ransac=_ransac_from(args, cfg_i.seed),
                    max_pairs=args.max_pairs, subsample_seed=cfg_i.seed,
                )
            )

    refs = ReferenceSet(frames=ref_frames, estimates=estimates)
    result = run_vote(query, refs)

    payload = _header("vote", seed, _config_dict(args, skip=(
        "seed", "no_timing", "out", "bundle", "func", "estimates"
    )))
    payload["result"] = result.to_dict()
    payload["result"]["reference_indices"] = ref_indices
    payload["result"]["query_index"] = query_index
    if args.with_oracle:
        oracle_idx, oracle_pose = best_view_oracle(
            query, refs, query.world_pose, bundle.model
        )
        payload["result"]["oracle_index"] = int(oracle_idx)
        payload["result"]["oracle_matches_vote"] = bool(
            oracle_idx == result.chosen_index
        )
    if not args.no_timing:
        payload["timing_s"] = {"total": time.perf_counter() - start}
    _write_json(args.out, payload)
    print(
        f"vote chose reference index {ref_indices[result.chosen_index]} "
        f"(score {result.iou_scores[result.chosen_index]:.4f}) -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    seed = _resolve_seed(args)
    bundle = load_bundle(args.bundle)
    run = json.loads(Path(args.run).read_text())
    if "frames" not in run:
        raise RocPoseError(f"{args.run}: not a track run (no 'frames' list)")
    if len(run["frames"]) != len(bundle.frames):
        raise RocPoseError(
            f"run has {len(run['frames'])} frames, bundle has "
            f"{len(bundle.frames)}"
        )
    ref_world = bundle.frames[0].world_pose
    est_worlds = []
    for row in run["frames"]:
        if row.get("estimate") is None:
            est_worlds.append(None)
        else:
            rel = Pose.from_matrix(np.array(row["estimate"]["pose"]))
            est_worlds.append(compose(invert(rel), ref_world))
    gt_worlds = [f.world_pose for f in bundle.frames]
    report = compute_report(
        bundle.model, gt_worlds, est_worlds,
        k=bundle.frames[0].intrinsics, max_threshold=args.threshold,
    )
    payload = _header("eval", seed, _config_dict(args, skip=(
        "seed", "no_timing", "out", "bundle", "func", "run", "csv"
    )))
    payload["metrics"] = report.to_dict()
    _write_json(args.out, payload)
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(args.csv).write_text(report.to_csv())
    agg = report.aggregates
    print(
        f"eval: add_auc={agg['add_auc']:.2f} adds_auc={agg['adds_auc']:.2f} "
        f"miss={agg['miss_rate_percent']:.1f}% -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# report


def _svg_accuracy_curves(per_frame: list, max_threshold: float) -> str:
    width, height = 640, 420
    ml, mr, mt, mb = 60, 20, 36, 48
    plot_w, plot_h = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + plot_w * x / max_threshold

    def sy(y):
        return mt + plot_h * (1.0 - y / 100.0)

    thresholds = np.linspace(0.0, max_threshold, 257)
    series = []
    for key, color in (("add", "#1f6fb2"), ("adds", "#c0392b")):
        vals = np.array(
            [np.inf if r.get(key) is None else float(r[key]) for r in per_frame]
        )
        acc = 100.0 * (vals[None, :] < thresholds[:, None]).mean(axis=1)
        pts = " ".join(
            f"{sx(t):.2f},{sy(a):.2f}" for t, a in zip(thresholds, acc)
        )
        series.append((key.upper().replace("ADDS", "ADD-S"), color, pts))

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        '<g font-family="sans-serif" font-size="12" fill="#222">',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" '
        'font-size="14">Accuracy vs distance threshold</text>',
    ]
    for i in range(6):
        frac = i / 5.0
        x = ml + plot_w * frac
        y = mt + plot_h * (1.0 - frac)
        lines.append(
            f'<line x1="{x:.1f}" y1="{mt}" x2="{x:.1f}" y2="{mt + plot_h}" '
            'stroke="#ddd"/>'
        )
        lines.append(
            f'<line x1="{ml}" y1="{y:.1f}" x2="{ml + plot_w}" y2="{y:.1f}" '
            'stroke="#ddd"/>'
        )
        lines.append(
            f'<text x="{x:.1f}" y="{mt + plot_h + 18}" text-anchor="middle">'
            f"{frac * max_threshold:.3f}</text>"
        )
        lines.append(
            f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end">'
            f"{frac * 100:.0f}</text>"
        )
    lines.append(
        f'<line x1="{ml}" y1="{mt + plot_h}" x2="{ml + plot_w}" '
        f'y2="{mt + plot_h}" stroke="#222"/>'
    )
    lines.append(
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + plot_h}" stroke="#222"/>'
    )
    lines.append(
        f'<text x="{ml + plot_w / 2:.0f}" y="{height - 12}" '
        'text-anchor="middle">threshold (m)</text>'
    )
    lines.append(
        f'<text x="16" y="{mt + plot_h / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + plot_h / 2:.0f})">accuracy (%)</text>'
    )
    for i, (label, color, pts) in enumerate(series):
        lines.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
        y = mt + 16 + 16 * i
        lines.append(
            f'<line x1="{ml + 10}" y1="{y}" x2="{ml + 34}" y2="{y}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        lines.append(f'<text x="{ml + 40}" y="{y + 4}">{label}</text>')
    lines.append("</g></svg>")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    payload = json.loads(Path(args.metrics).read_text())
    metrics = payload.get("metrics", payload)
    if "per_frame" not in metrics or "aggregates" not in metrics:
        raise RocPoseError(f"{args.metrics}: not an eval output")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    max_threshold = float(metrics["aggregates"].get("max_threshold_m", 0.10))
    (out_dir / "accuracy_curves.svg").write_text(
        _svg_accuracy_curves(metrics["per_frame"], max_threshold)
    )

    rows = metrics["per_frame"]
    if rows:
        keys = list(rows[0].keys())
        csv_lines = [",".join(keys)]
        for r in rows:
            csv_lines.append(
                ",".join("" if r.get(k) is None else str(r.get(k)) for k in keys)
            )
        (out_dir / "per_frame.csv").write_text("\n".join(csv_lines) + "\n")

    agg = metrics["aggregates"]
    pad = max(len(k) for k in agg)
    text = "\n".join(
        f"{k.ljust(pad)}  {agg[k]}" for k in sorted(agg)
    )
    (out_dir / "aggregates.txt").write_text(text + "\n")
    print(f"wrote accuracy_curves.svg, per_frame.csv, aggregates.txt to {out_dir}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rocpose",
        description="Reference-object-coordinate pose estimation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render a synthetic scene bundle")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.add_argument("--kind", choices=("box", "cylinder", "lshape", "blob"),
                   default="box")
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--gap-deg", default="10:40", metavar="X|LO:HI",
                   help="per-step rotation gap, degrees")
    p.add_argument("--trans-gap", default="0.02:0.10", metavar="X|LO:HI",
                   help="per-step camera baseline, meters")
    p.add_argument("--occlusion", type=float, default=0.0,
                   help="mask fraction carved from non-reference frames")
    p.add_argument("--noise", type=float, default=0.0,
                   help="depth noise std dev, meters")
    p.add_argument("--size", type=float, default=0.2, help="object size, meters")
    p.add_argument("--samples", type=int, default=1024,
                   help="model points kept for metrics")
    p.add_argument("--render-samples", type=int, default=8192)
    p.add_argument("--image-size", type=int, default=192)
    p.add_argument("--focal", type=float, default=240.0)
    p.add_argument("--distance", type=float, default=None,
                   help="camera distance, meters (default: 2.6 x diameter)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate", help="solve one reference/query pair")
    p.add_argument("--bundle", required=True)
    p.add_argument("--reference", type=int, default=0)
    p.add_argument("--query", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--save-roc", default=None, metavar="PATH.pfm|PATH.ppm",
                   help="also save the predicted ROC map")
    _add_corruption_flags(p)
    _add_solver_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("track", help="solve every frame against frame 0")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker threads; results are identical for any value")
    _add_corruption_flags(p)
    _add_solver_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("vote", help="select the best reference view")
    p.add_argument("--bundle", required=True)
    p.add_argument("--query-index", type=int, default=-1,
                   help="query frame (default: last)")
    p.add_argument("--estimates", default=None,
                   help="JSON file with per-reference relative poses; "
                        "computed with the oracle predictor when omitted")
    p.add_argument("--with-oracle", action="store_true",
                   help="also report the best-view oracle's choice")
    p.add_argument("--out", required=True)
    _add_corruption_flags(p)
    _add_solver_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("eval", help="metric suite for a track run")
    p.add_argument("--bundle", required=True)
    p.add_argument("--run", required=True, help="track output JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None, help="also write per-frame CSV")
    p.add_argument("--threshold", type=float, default=0.10,
                   help="AUC integration limit, meters")
    _add_common_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="plots and tables from an eval output")
    p.add_argument("--metrics", required=True, help="eval output JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RocPoseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
