"""Per-frame orchestration, evaluation metrics, and result serialization.

Frame flow: segmentation -> finger detection/classification -> pixel
sampling -> swarm optimization -> state update. Frames are processed
strictly in order because the palm-orientation filter and the previous
optimum are the only cross-frame state.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import handmodel, reinit, sampling, segmentation
from .config import RunConfig
from .depthio import CameraIntrinsics, DepthFrame, DepthSequence, pixel_to_camera
from .errors import EmptyFrameError
from .handmodel import HandTemplate
from .objective import CostBreakdown, CostWeights, FrameObjective
from .pso import SwarmConfig, TrackState, init_particles, run_generations

JOINT_NAMES = ("wrist", "thumb", "index", "middle", "ring", "pinky")


@dataclass
class FrameResult:
    frame_index: int
    pose: np.ndarray
    size: np.ndarray
    cost: CostBreakdown | None
    joints: np.ndarray | None            # (6, 3) wrist + fingertips
    timings_ms: dict[str, float]
    classifications: list[dict] = field(default_factory=list)
    n_detected: int = 0
    lost: bool = False
    best_cost_per_gen: list[float] = field(default_factory=list)
    alpha_pair_error: float = 0.0
    truncated_mask: bool = False


@dataclass
class EvalReport:
    n_eval_frames: int
    mean_error_mm: float
    per_joint_mm: dict[str, float]
    ccr_percent: dict[str, float]
    ccr_average: float
    n_matched_detections: int
    fps: float
    per_frame_error: list[tuple[int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_eval_frames": self.n_eval_frames,
            "mean_error_mm": self.mean_error_mm,
            "per_joint_mm": self.per_joint_mm,
            "ccr_percent": self.ccr_percent,
            "ccr_average": self.ccr_average,
            "n_matched_detections": self.n_matched_detections,
            "fps": self.fps,
        }


class Tracker:
    """Stateful frame-by-frame tracker; create one per sequence."""

    def __init__(self, cfg: RunConfig, k: CameraIntrinsics,
                 tmpl: HandTemplate | None = None):
        self.cfg = cfg
        self.k = k
        self.tmpl = tmpl if tmpl is not None else handmodel.load_template(cfg.template_path)
        self.rng = np.random.default_rng(cfg.seed)
        self.weights = CostWeights(d2m=cfg.w_d2m, m2d=cfg.w_m2d, overlap=cfg.w_overlap)
        self.swarm = SwarmConfig(
            n_particles=cfg.n_particles, n_generations=cfg.n_generations,
            sigma_trans_mm=cfg.sigma_trans, sigma_rot_rad=cfg.sigma_rot,
            sigma_size=cfg.sigma_size, hint_fraction=cfg.hint_fraction)
        self.detect_params = reinit.DetectionParams(
            band_min=cfg.band_min, band_max=cfg.band_max,
            orth_window_scale=cfg.orth_window_scale,
            min_protrusion_mm=cfg.min_protrusion_mm,
            extreme_margin=cfg.extreme_margin)
        self.state: TrackState | None = None
        self.palm = reinit.PalmState(e_init=cfg.e_init)

    def _bootstrap(self, frame: DepthFrame, mask) -> TrackState:
        pixels = mask.pixels()
        centroid = pixels.mean(axis=0)
        depth_mean = float(frame.depth[mask.member].mean())
        center = pixel_to_camera(centroid[0], centroid[1], depth_mean, self.k)
        pose = handmodel.neutral_pose(self.tmpl, translation=center)
        size = np.full(6, self.cfg.initial_scale)
        return TrackState(pose=pose, size=size, frame_index=-1)

    def _lost_result(self, frame: DepthFrame, t0: float) -> FrameResult:
        total = (time.perf_counter() - t0) * 1000.0
        prev = self.state
        return FrameResult(
            frame_index=frame.frame_index,
            pose=prev.pose.copy() if prev else np.zeros(handmodel.N_POSE),
            size=prev.size.copy() if prev else np.ones(handmodel.N_SIZE),
            cost=None, joints=None,
            timings_ms={"reinit": 0.0, "optimization": 0.0, "other": total, "total": total},
            lost=True)

    def track_frame(self, frame: DepthFrame) -> FrameResult:
        cfg = self.cfg
        t0 = time.perf_counter()
        try:
            mask = segmentation.segment_hand(frame, cfg.delta_depth, cfg.max_pixels)
        except EmptyFrameError:
            return self._lost_result(frame, t0)
        if self.state is None:
            self.state = self._bootstrap(frame, mask)
        prev = self.state
        t_seg = time.perf_counter()

        # Re-initialization: palm, fingers, orientation, classification.
        palm_px, palm_3d, palm_radius_px = reinit.palm_center(mask, frame, self.k)
        self.palm.center_px = palm_px
        self.palm.center_3d = palm_3d
        found, claimed = reinit.detect_planar_fingers(
            frame, mask, palm_px, palm_3d, palm_radius_px, self.tmpl, prev.size,
            self.k, self.detect_params)
        orth, claimed = reinit.detect_orthogonal_fingers(
            frame, mask, palm_3d, found, claimed, self.tmpl, prev.size, self.k,
            self.detect_params)
        found = found + orth
        prev_theta = self.palm.theta_o if self.palm.frames_observed else None
        theta_m = reinit.measure_palm_theta(mask, claimed, palm_px,
                                            [f.tip_px for f in found], prev_theta)
        theta_p = reinit.predict_palm_orientation(self.palm, theta_m)
        theta_used = theta_p if cfg.use_prediction else theta_m
        junctions = handmodel.junction_positions(self.tmpl, float(prev.size[0]),
                                                 theta_used, palm_3d)
        cls = reinit.classify_fingers(found, junctions)
        hints = reinit.build_hints(cls, found, theta_used, self.tmpl)
        t_reinit = time.perf_counter()

        grad = sampling.gradient_map(frame, mask)
        samples = sampling.sample_fixed_total(
            frame, mask, grad, cfg.n_samples, cfg.n_seeds, cfg.t1, cfg.t2,
            cfg.window, self.k, self.rng, mode=cfg.sampling_mode)
        t_sample = time.perf_counter()

        objective = FrameObjective(frame, mask, samples.points, self.k, self.tmpl,
                                   self.weights, cfg.d_max, threads=cfg.threads)
        particles = init_particles(self.tmpl, prev, hints, self.swarm, self.rng)
        pose, size, cost, diag = run_generations(objective, particles, self.swarm,
                                                 prev, self.rng)
        t_opt = time.perf_counter()

        self.state = TrackState(pose=pose, size=size, frame_index=frame.frame_index)
        reinit.observe_optimized(self.palm, handmodel.palm_orientation_of_pose(pose))

        joints = handmodel.joint_positions(self.tmpl, size, pose)
        breakdown = objective.breakdown(size, pose)
        t_end = time.perf_counter()

        classifications = [
            {"class": c, "kind": found[i].kind,
             "tip": [float(x) for x in found[i].tip],
             "tip_px": [int(found[i].tip_px[0]), int(found[i].tip_px[1])]}
            for i, c in cls.assignments.items()
        ]
        reinit_ms = (t_reinit - t_seg) * 1000.0
        opt_ms = (t_opt - t_sample) * 1000.0
        total_ms = (t_end - t0) * 1000.0
        other_ms = total_ms - reinit_ms - opt_ms
        return FrameResult(
            frame_index=frame.frame_index, pose=pose, size=size, cost=breakdown,
            joints=joints,
            timings_ms={"reinit": reinit_ms, "optimization": opt_ms,
                        "other": other_ms, "total": total_ms},
            classifications=classifications, n_detected=len(found),
            best_cost_per_gen=diag.best_cost_per_gen,
            alpha_pair_error=diag.alpha_pair_error,
            truncated_mask=mask.truncated)


def track_sequence(seq: DepthSequence, cfg: RunConfig,
                   tmpl: HandTemplate | None = None) -> list[FrameResult]:
    k = seq.intrinsics if cfg.fx is None else CameraIntrinsics(cfg.fx, cfg.fy, cfg.cx, cfg.cy)
    tracker = Tracker(cfg, k, tmpl)
    return [tracker.track_frame(fr) for fr in seq.frames]


def evaluate(results: list[FrameResult], labels: dict, skip_frames: int = 100,
             match_radius_mm: float = 50.0) -> EvalReport:
    """Score tracked joints and finger classifications against labels.

    Joint error is the 3D Euclidean distance per labeled joint, averaged over
    evaluated frames (the first skip_frames are warm-up and excluded). CCR
    groups detections by ground-truth identity (nearest labeled fingertip
    within match_radius_mm) and reports the fraction assigned correctly.
    """
    per_joint = np.zeros(6)
    n_frames = 0
    series: list[tuple[int, float]] = []
    ccr_total = np.zeros(5, dtype=int)
    ccr_correct = np.zeros(5, dtype=int)
    times = []

    evaluated = [r for r in results
                 if r.frame_index >= skip_frames and not r.lost and r.frame_index in labels]
    if not evaluated:
        raise ValueError("no overlapping labeled frames to evaluate")
    for r in evaluated:
        lab = labels[r.frame_index]
        err = np.linalg.norm(r.joints - lab.joints(), axis=1)
        per_joint += err
        n_frames += 1
        series.append((r.frame_index, float(err.mean())))
        tips = lab.fingertips
        for rec in r.classifications:
            det_tip = np.asarray(rec["tip"])
            dist = np.linalg.norm(tips - det_tip[None, :], axis=1)
            true_cls = int(np.argmin(dist))
            if dist[true_cls] <= match_radius_mm:
                ccr_total[true_cls] += 1
                if rec["class"] == true_cls:
                    ccr_correct[true_cls] += 1
    for r in results:
        if not r.lost:
            times.append(r.timings_ms["total"])

    per_joint /= n_frames
    with np.errstate(invalid="ignore", divide="ignore"):
        ccr = np.where(ccr_total > 0, 100.0 * ccr_correct / np.maximum(ccr_total, 1), np.nan)
    seen = ccr_total > 0
    ccr_avg = float(np.nanmean(ccr[seen])) if seen.any() else float("nan")
    return EvalReport(
        n_eval_frames=n_frames,
        mean_error_mm=float(per_joint.mean()),
        per_joint_mm={name: float(v) for name, v in zip(JOINT_NAMES, per_joint)},
        ccr_percent={name: (float(ccr[i]) if seen[i] else float("nan"))
                     for i, name in enumerate(JOINT_NAMES[1:])},
        ccr_average=ccr_avg,
        n_matched_detections=int(ccr_total.sum()),
        fps=(1000.0 / float(np.mean(times)) if times else 0.0),
        per_frame_error=series)


def write_results(path, results: list[FrameResult], config_echo: dict) -> None:
    """Newline-delimited records: one config line, then one line per frame."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"type": "config", **config_echo}) + "\n")
        for r in results:
            rec = {
                "type": "frame",
                "frame": r.frame_index,
                "lost": r.lost,
                "pose": [float(x) for x in r.pose],
                "size": [float(x) for x in r.size],
                "cost": (None if r.cost is None else
                         {"d2m": r.cost.d2m, "m2d": r.cost.m2d,
                          "overlap": r.cost.overlap, "total": r.cost.total}),
                "joints": (None if r.joints is None else
                           [[float(v) for v in row] for row in r.joints]),
                "timings_ms": {k: round(v, 4) for k, v in r.timings_ms.items()},
                "classifications": r.classifications,
                "n_detected": r.n_detected,
            }
            fh.write(json.dumps(rec) + "\n")


def read_results(path):
    """Parse a result stream -> (config dict, list of frame dicts)."""
    config = None
    frames = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("type") == "config":
                config = rec
            elif rec.get("type") == "frame":
                frames.append(rec)
    return config, frames
