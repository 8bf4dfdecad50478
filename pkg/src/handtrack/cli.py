"""Command-line entry points: track, synth, bench, ablate, overlay."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import handmodel, pipeline, reinit, segmentation, trajectory
from .config import RunConfig, apply_overrides, load_config
from .depthio import CameraIntrinsics, DEFAULT_INTRINSICS, load_sequence
from .errors import ConfigError, FormatError, HandTrackError
from .renderer import NoiseSpec, synthesize_sequence

EXIT_OK = 0
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_CONFIG = 4

TABLE_ROWS = (
    ("reinit", "Finger detection/classification"),
    ("optimization", "Optimization"),
    ("other", "Others"),
    ("total", "Total"),
)


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "threads", None) is not None:
        overrides["threads"] = str(args.threads)
    return apply_overrides(cfg, overrides)


def cmd_track(args) -> int:
    cfg = _load_cfg(args)
    seq = load_sequence(args.sequence, labels_path=args.labels)
    results = pipeline.track_sequence(seq, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline.write_results(out_dir / "results.jsonl", results, cfg.to_dict())
    if seq.labels:
        report = pipeline.evaluate(results, seq.labels, skip_frames=cfg.eval_skip_frames)
        payload = {"config": cfg.to_dict(), **report.to_dict()}
        (out_dir / "report.json").write_text(json.dumps(payload, indent=2))
        print(f"tracked {len(results)} frames | mean error {report.mean_error_mm:.2f} mm "
              f"| avg CCR {report.ccr_average:.1f}% | {report.fps:.1f} fps")
    else:
        (out_dir / "report.json").write_text(json.dumps(
            {"config": cfg.to_dict(), "note": "no labels"}, indent=2))
        print(f"tracked {len(results)} frames (no labels; results only)")
    return EXIT_OK


def cmd_synth(args) -> int:
    tmpl = handmodel.load_template(args.template)
    traj = trajectory.load_trajectory(args.script)
    if args.fx is not None:
        k = CameraIntrinsics(args.fx, args.fy, args.cx, args.cy)
    else:
        k = DEFAULT_INTRINSICS
    noise = NoiseSpec(gaussian_sigma_mm=args.noise_sigma, void_prob=args.void_prob,
                      wrist_band_px=args.wrist_band)
    rng = np.random.default_rng(args.seed)
    frames, labels = synthesize_sequence(args.out, tmpl, traj, k, args.width,
                                         args.height, noise, rng)
    print(f"wrote {len(frames)} frames to {args.out} (+ labels)")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    seq = load_sequence(args.sequence)
    if args.frames:
        seq.frames = seq.frames[: args.frames]
    stage_means = {key: [] for key, _ in TABLE_ROWS}
    for _ in range(args.repetitions):
        results = pipeline.track_sequence(seq, cfg)
        timings = [r.timings_ms for r in results if not r.lost]
        for key, _ in TABLE_ROWS:
            stage_means[key].append(float(np.mean([t[key] for t in timings])))
    print(f"# {len(seq.frames)} frames x {args.repetitions} repetitions, "
          f"threads={cfg.threads}")
    print(f"{'Process':<34}{'Mean (ms)':>10}{'p50':>9}{'p90':>9}")
    report = {}
    for key, label in TABLE_ROWS:
        vals = stage_means[key]
        report[key] = {"mean": float(np.mean(vals)),
                       "p50": float(np.percentile(vals, 50)),
                       "p90": float(np.percentile(vals, 90))}
        print(f"{label:<34}{report[key]['mean']:>10.2f}{report[key]['p50']:>9.2f}"
              f"{report[key]['p90']:>9.2f}")
    if args.out:
        Path(args.out).write_text(json.dumps({"config": cfg.to_dict(), "stages": report},
                                             indent=2))
    return EXIT_OK


def _mean_error(seq, cfg) -> float:
    results = pipeline.track_sequence(seq, cfg)
    return pipeline.evaluate(results, seq.labels,
                             skip_frames=cfg.eval_skip_frames).mean_error_mm


def _ccr(seq, cfg) -> float:
    results = pipeline.track_sequence(seq, cfg)
    return pipeline.evaluate(results, seq.labels,
                             skip_frames=cfg.eval_skip_frames).ccr_average


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    seqs = [load_sequence(p) for p in args.sequences]
    for i, (s, p) in enumerate(zip(seqs, args.sequences)):
        if not s.labels:
            raise FormatError(f"{p}: ablation requires labels")
    table: dict[str, float] = {}
    if args.study == "sigma2":
        for sigma2 in (0.0, 0.005, 0.01, 0.015):
            cell = apply_overrides(RunConfig(**cfg.to_dict()), {"sigma_size": str(sigma2)})
            table[f"sigma2={sigma2}"] = float(np.mean([_mean_error(s, cell) for s in seqs]))
        metric = "mean error (mm)"
    elif args.study == "sampling":
        for mode in ("random", "hierarchical"):
            cell = apply_overrides(RunConfig(**cfg.to_dict()), {"sampling_mode": mode})
            table[mode] = float(np.mean([_mean_error(s, cell) for s in seqs]))
        metric = "mean error (mm)"
    elif args.study == "prediction":
        for label, flag in (("without", "false"), ("with", "true")):
            cell = apply_overrides(RunConfig(**cfg.to_dict()), {"use_prediction": flag})
            table[label] = float(np.mean([_ccr(s, cell) for s in seqs]))
        metric = "average CCR (%)"
    else:
        raise ConfigError(f"unknown study {args.study!r}")
    print(f"# study={args.study} over {len(seqs)} sequence(s); cells: {metric}")
    for key, val in table.items():
        print(f"{key:<20}{val:>10.2f}")
    if args.out:
        Path(args.out).write_text(json.dumps(
            {"study": args.study, "metric": metric, "cells": table,
             "config": cfg.to_dict()}, indent=2))
    return EXIT_OK


def cmd_overlay(args) -> int:
    from PIL import Image, ImageDraw
    from scipy import ndimage

    cfg = _load_cfg(args)
    seq = load_sequence(args.sequence)
    tmpl = handmodel.load_template(cfg.template_path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for idx in args.frame:
        frame = seq.frames[idx]
        mask = segmentation.segment_hand(frame, cfg.delta_depth, cfg.max_pixels)
        palm_px, palm_3d, palm_r = reinit.palm_center(mask, frame, seq.intrinsics)
        params = reinit.DetectionParams()
        found, claimed = reinit.detect_planar_fingers(
            frame, mask, palm_px, palm_3d, palm_r, tmpl, np.ones(6),
            seq.intrinsics, params)
        orth, claimed = reinit.detect_orthogonal_fingers(
            frame, mask, palm_3d, found, claimed, tmpl, np.ones(6),
            seq.intrinsics, params)
        found += orth
        dt = ndimage.distance_transform_edt(mask.member)
        dt_img = (255.0 * dt / max(dt.max(), 1e-9)).astype(np.uint8)
        img = Image.fromarray(dt_img).convert("RGB")
        draw = ImageDraw.Draw(img)
        draw.ellipse([palm_px[0] - 3, palm_px[1] - 3, palm_px[0] + 3, palm_px[1] + 3],
                     outline=(60, 120, 255), width=2)
        for det in found:
            u, v = det.tip_px
            draw.ellipse([u - 3, v - 3, u + 3, v + 3], outline=(255, 60, 60), width=2)
        img.save(out_dir / f"overlay_{idx:05d}.png")
    print(f"wrote {len(args.frame)} overlay(s) to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="handtrack",
                                     description="Sphere-model hand tracking on depth sequences")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="random seed override")
    common.add_argument("--threads", type=int, help="evaluation thread count")

    p = sub.add_parser("track", parents=[common], help="track a depth sequence")
    p.add_argument("sequence")
    p.add_argument("--labels", help="ground-truth CSV (default: sibling file)")
    p.add_argument("--out", default="trackout", help="output directory")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("synth", help="render a synthetic labeled sequence")
    p.add_argument("script", help="trajectory script file")
    p.add_argument("--out", required=True, help="output sequence path")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--void-prob", type=float, default=0.0)
    p.add_argument("--wrist-band", type=int, default=0)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--fx", type=float)
    p.add_argument("--fy", type=float)
    p.add_argument("--cx", type=float)
    p.add_argument("--cy", type=float)
    p.add_argument("--template")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", parents=[common], help="per-stage timing table")
    p.add_argument("sequence")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--frames", type=int, help="limit to the first N frames")
    p.add_argument("--out", help="write the table as JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", parents=[common], help="run a study grid")
    p.add_argument("--study", required=True, choices=("sampling", "sigma2", "prediction"))
    p.add_argument("sequences", nargs="+")
    p.add_argument("--out", help="write cells as JSON")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("overlay", parents=[common], help="debug overlay images")
    p.add_argument("sequence")
    p.add_argument("--frame", type=int, action="append", required=True)
    p.add_argument("--out", default="overlays")
    p.set_defaults(func=cmd_overlay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HandTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    raise SystemExit(main())
