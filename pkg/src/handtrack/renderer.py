"""Synthetic depth renderer for the sphere model.

Casts one ray per pixel and keeps the nearest analytic ray-sphere
intersection; produces the depth map, per-pixel part labels, and exact
ground-truth joint positions. This is the ground-truth oracle behind every
closed-loop test and the dataset generator for the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import handmodel
from .depthio import CameraIntrinsics, DepthFrame, GroundTruthLabel, save_labels, save_sequence
from .handmodel import HandTemplate, SphereModel

BACKGROUND = -1


@dataclass
class NoiseSpec:
    """Sensor-noise emulation: Gaussian depth jitter, dropouts, wrist band."""

    gaussian_sigma_mm: float = 0.0
    void_prob: float = 0.0
    wrist_band_px: int = 0

    def __post_init__(self) -> None:
        if self.gaussian_sigma_mm < 0:
            raise ValueError("gaussian sigma must be >= 0")
        if not 0.0 <= self.void_prob <= 1.0:
            raise ValueError("void probability must be in [0, 1]")


@dataclass
class RenderOutput:
    """Rendered frame plus the oracle data that produced it."""

    frame: DepthFrame
    part_labels: np.ndarray              # (h, w) int8, BACKGROUND where empty
    size: np.ndarray | None = None
    pose: np.ndarray | None = None
    joints: np.ndarray | None = None     # (6, 3) wrist + fingertips
    depth_exact: np.ndarray | None = field(default=None, repr=False)


def render(m: SphereModel, k: CameraIntrinsics, width: int, height: int,
           frame_index: int = 0) -> RenderOutput:
    """Render the sphere model into a depth frame (z-buffer over 48 spheres)."""
    if np.any(m.centers[:, 2] <= m.radii):
        raise ValueError("sphere at or behind the camera plane (need center z > radius)")

    zbuf = np.full((height, width), np.inf)
    labels = np.full((height, width), BACKGROUND, dtype=np.int8)

    for c, r, part in zip(m.centers, m.radii, m.parts):
        cu = k.fx * c[0] / c[2] + k.cx
        cv = k.fy * c[1] / c[2] + k.cy
        # Conservative silhouette bound in pixels at the sphere's near face.
        half_u = k.fx * r / (c[2] - r) + 2.0
        half_v = k.fy * r / (c[2] - r) + 2.0
        u0 = max(int(np.floor(cu - half_u)), 0)
        u1 = min(int(np.ceil(cu + half_u)) + 1, width)
        v0 = max(int(np.floor(cv - half_v)), 0)
        v1 = min(int(np.ceil(cv + half_v)) + 1, height)
        if u0 >= u1 or v0 >= v1:
            continue
        us = np.arange(u0, u1, dtype=np.float64)
        vs = np.arange(v0, v1, dtype=np.float64)
        dx = (us - k.cx) / k.fx
        dy = (vs - k.cy) / k.fy
        # Ray P(t) = t * (dx, dy, 1); solve |P - c|^2 = r^2 for the near root.
        a = dx[None, :] ** 2 + dy[:, None] ** 2 + 1.0
        b = dx[None, :] * c[0] + dy[:, None] * c[1] + c[2]  # = dir . c
        disc = b * b - a * (np.dot(c, c) - r * r)
        hit = disc >= 0.0
        t = np.where(hit, (b - np.sqrt(np.maximum(disc, 0.0))) / a, np.inf)
        t = np.where(t > 0.0, t, np.inf)
        window = zbuf[v0:v1, u0:u1]
        closer = t < window
        window[closer] = t[closer]
        labels[v0:v1, u0:u1][closer] = part

    depth_exact = np.where(np.isfinite(zbuf), zbuf, 0.0)
    depth = np.where(np.isfinite(zbuf), np.clip(np.rint(zbuf), 1, 65535), 0).astype(np.uint16)
    frame = DepthFrame(width=width, height=height, depth=depth, frame_index=frame_index)
    return RenderOutput(frame=frame, part_labels=labels, depth_exact=depth_exact)


def render_pose(tmpl: HandTemplate, l: np.ndarray, p: np.ndarray, k: CameraIntrinsics,
                width: int, height: int, frame_index: int = 0) -> RenderOutput:
    """Pose the template and render it, attaching ground truth."""
    l = np.asarray(l, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    out = render(handmodel.pose_spheres(tmpl, l, p), k, width, height, frame_index)
    out.size = l.copy()
    out.pose = p.copy()
    out.joints = handmodel.joint_positions(tmpl, l, p)
    return out


def apply_noise(out: RenderOutput, noise: NoiseSpec, k: CameraIntrinsics,
                rng: np.random.Generator) -> None:
    """Degrade the rendered frame in place: jitter, dropouts, wrist band."""
    depth = out.frame.depth
    valid = depth > 0
    if noise.gaussian_sigma_mm > 0:
        jitter = rng.normal(0.0, noise.gaussian_sigma_mm, size=depth.shape)
        noisy = np.rint(depth.astype(np.float64) + jitter)
        depth[valid] = np.clip(noisy[valid], 1, 65535).astype(np.uint16)
    if noise.void_prob > 0:
        drop = rng.random(depth.shape) < noise.void_prob
        depth[drop & valid] = 0
    if noise.wrist_band_px > 0 and out.joints is not None and out.pose is not None:
        wrist = out.joints[0]
        if wrist[2] > 0:
            wu = k.fx * wrist[0] / wrist[2] + k.cx
            wv = k.fy * wrist[1] / wrist[2] + k.cy
            theta = handmodel.palm_orientation_of_pose(out.pose)
            # Arm-ward unit vector in the image plane (opposite the fingers).
            au, av = -np.sin(theta), np.cos(theta)
            uu, vv = np.meshgrid(np.arange(out.frame.width), np.arange(out.frame.height))
            s = (uu - wu) * au + (vv - wv) * av
            depth[(s >= 0) & (s <= noise.wrist_band_px)] = 0


def synthesize_frames(tmpl: HandTemplate, trajectory, k: CameraIntrinsics,
                      width: int, height: int, noise: NoiseSpec,
                      rng: np.random.Generator):
    """Render a (size, pose) trajectory -> (frames, labels, clean outputs)."""
    frames: list[DepthFrame] = []
    labels: list[GroundTruthLabel] = []
    outputs: list[RenderOutput] = []
    for i, (l, p) in enumerate(trajectory):
        out = render_pose(tmpl, l, p, k, width, height, frame_index=i)
        outputs.append(RenderOutput(frame=DepthFrame(width, height, out.frame.depth.copy(), i),
                                    part_labels=out.part_labels, size=out.size, pose=out.pose,
                                    joints=out.joints))
        apply_noise(out, noise, k, rng)
        frames.append(out.frame)
        labels.append(GroundTruthLabel(frame_index=i, wrist=out.joints[0],
                                       fingertips=out.joints[1:]))
    return frames, labels, outputs


def synthesize_sequence(path, tmpl: HandTemplate, trajectory, k: CameraIntrinsics,
                        width: int, height: int, noise: NoiseSpec,
                        rng: np.random.Generator, labels_path=None):
    """Render a trajectory and write the sequence plus its label CSV."""
    frames, labels, _ = synthesize_frames(tmpl, trajectory, k, width, height, noise, rng)
    save_sequence(path, frames, k)
    from pathlib import Path

    lp = Path(labels_path) if labels_path else Path(path).with_suffix(".labels.csv")
    save_labels(lp, labels)
    return frames, labels
