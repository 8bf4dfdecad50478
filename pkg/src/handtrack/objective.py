"""Swarm cost: two depth/model discrepancy terms plus an invalid-overlap term.

The public operations are exact float64 exhaustive evaluations; they are the
reference the fast float32 swarm path (`FrameObjective.batch_total`) is tested
against. Distances are millimeters throughout so the terms are commensurable.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

from . import handmodel
from ._kernels import d2m_costs, fk_batch32, m2d_costs, overlap_costs
from .depthio import CameraIntrinsics, DepthFrame
from .gridops import distance_to_mask
from .handmodel import HandTemplate, SphereModel
from .segmentation import HandMask

DEFAULT_D_MAX_MM = 100.0


@dataclass(frozen=True)
class CostWeights:
    d2m: float = 1.0
    m2d: float = 1.0
    overlap: float = 1.0

    def __post_init__(self) -> None:
        if min(self.d2m, self.m2d, self.overlap) < 0:
            raise ValueError("cost weights must be non-negative")
        if self.d2m == self.m2d == self.overlap == 0:
            raise ValueError("at least one cost weight must be positive")


@dataclass(frozen=True)
class CostBreakdown:
    d2m: float
    m2d: float
    overlap: float
    total: float


def point_to_model(x: np.ndarray, m: SphereModel) -> float:
    """Distance from a point to the nearest sphere surface (mm).

    Interior points count by penetration depth: min over spheres of
    | ||x - c|| - r |.
    """
    return float(surface_distances(np.asarray(x, dtype=np.float64)[None, :], m)[0])


def surface_distances(points: np.ndarray, m: SphereModel) -> np.ndarray:
    """Vectorized point_to_model over (N, 3) points."""
    d = np.linalg.norm(points[:, None, :] - m.centers[None, :, :], axis=2)
    return np.abs(d - m.radii[None, :]).min(axis=1)


def cost_data_to_model(points: np.ndarray, m: SphereModel,
                       d_max: float = DEFAULT_D_MAX_MM) -> float:
    """Mean clamped surface distance of the sampled points (mm)."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise ValueError("cost_data_to_model needs at least one sample point")
    return float(np.minimum(surface_distances(points, m), d_max).mean())


def mask_distance_px(mask: HandMask) -> np.ndarray:
    """Per-pixel Euclidean distance (px) to the nearest mask pixel."""
    if mask.pixel_count == 0:
        return np.full((mask.height, mask.width), np.inf)
    return distance_to_mask(mask.member)


def cost_model_to_data(m: SphereModel, frame: DepthFrame, mask: HandMask,
                       k: CameraIntrinsics, d_max: float = DEFAULT_D_MAX_MM,
                       _mask_dist: np.ndarray | None = None) -> float:
    """Mean per-sphere penalty for spheres the depth map does not explain.

    A sphere is free when its center projects into the mask at or behind the
    observed surface (within one radius). Otherwise it pays, clamped at
    d_max: out-of-mask projections pay the pixel distance to the nearest mask
    pixel converted to mm at the sphere's depth; in-mask free-space
    violations pay observed - (z - r).
    """
    dist_px = mask_distance_px(mask) if _mask_dist is None else _mask_dist
    f_mean = 0.5 * (k.fx + k.fy)
    depth = frame.depth
    h, w = depth.shape
    total = 0.0
    for c, r in zip(m.centers, m.radii):
        z = c[2]
        if z <= 1e-6:
            total += d_max
            continue
        ui = int(np.rint(k.fx * c[0] / z + k.cx))
        vi = int(np.rint(k.fy * c[1] / z + k.cy))
        uc, vc = min(max(ui, 0), w - 1), min(max(vi, 0), h - 1)
        off = float(np.hypot(ui - uc, vi - vc))
        if off == 0.0 and mask.member[vc, uc]:
            obs = float(depth[vc, uc])
            pen = 0.0 if z >= obs - r else obs - (z - r)
        else:
            pen = (float(dist_px[vc, uc]) + off) * z / f_mean
        total += min(pen, d_max)
    return total / len(m.centers)


@lru_cache(maxsize=4)
def _counted_pairs(parts_key: bytes, finger_first: tuple) -> np.ndarray:
    parts = np.frombuffer(parts_key, dtype=np.int8)
    first = set(finger_first)
    pairs = []
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            pi, pj = int(parts[i]), int(parts[j])
            if pi == pj:
                continue
            pair = {pi, pj}
            # The palm/thumb connectors are a junction by construction.
            if handmodel.PART_THUMB_BASE in pair and pair <= {
                handmodel.PART_THUMB_BASE, handmodel.PART_PALM, handmodel.PART_FINGERS[0]
            }:
                continue
            # Each finger's most-proximal sphere meets the palm by design.
            if handmodel.PART_PALM in pair and (i in first or j in first):
                continue
            pairs.append((i, j))
    return np.array(pairs, dtype=np.int32)


def counted_overlap_pairs(tmpl: HandTemplate) -> np.ndarray:
    """Sphere index pairs whose interpenetration is anatomically invalid."""
    first = tuple(int(i) for i in tmpl.fingertip_sphere - 5)  # proximal sphere per finger
    return _counted_pairs(tmpl.part_ids.astype(np.int8).tobytes(), first)


def cost_overlap(m: SphereModel, tmpl: HandTemplate) -> float:
    """Total interpenetration depth over invalid sphere pairs (mm)."""
    pairs = counted_overlap_pairs(tmpl)
    ci = m.centers[pairs[:, 0]]
    cj = m.centers[pairs[:, 1]]
    gap = m.radii[pairs[:, 0]] + m.radii[pairs[:, 1]] - np.linalg.norm(ci - cj, axis=1)
    return float(np.maximum(gap, 0.0).sum())


def total_cost(points: np.ndarray, frame: DepthFrame, mask: HandMask,
               k: CameraIntrinsics, tmpl: HandTemplate, l: np.ndarray,
               p: np.ndarray, weights: CostWeights = CostWeights(),
               d_max: float = DEFAULT_D_MAX_MM) -> CostBreakdown:
    """Pose the model once and combine the three terms."""
    m = handmodel.pose_spheres(tmpl, l, p)
    d2m = cost_data_to_model(points, m, d_max)
    m2d = cost_model_to_data(m, frame, mask, k, d_max)
    ov = cost_overlap(m, tmpl)
    total = weights.d2m * d2m + weights.m2d * m2d + weights.overlap * ov
    return CostBreakdown(d2m=d2m, m2d=m2d, overlap=ov, total=total)


class FrameObjective:
    """Per-frame evaluation context shared by all swarm particles.

    Precomputes the mask distance transform and float32 views once, then
    evaluates whole particle batches through the compiled kernels.
    """

    def __init__(self, frame: DepthFrame, mask: HandMask, points: np.ndarray,
                 k: CameraIntrinsics, tmpl: HandTemplate,
                 weights: CostWeights = CostWeights(),
                 d_max: float = DEFAULT_D_MAX_MM, threads: int = 1):
        self.frame = frame
        self.mask = mask
        self.k = k
        self.tmpl = tmpl
        self.weights = weights
        self.d_max = float(d_max)
        self.threads = max(int(threads), 1)
        self.points = np.asarray(points, dtype=np.float64)
        self._points32 = np.ascontiguousarray(self.points, dtype=np.float32)
        self._depth32 = frame.depth.astype(np.float32)
        dist = mask_distance_px(mask)
        self._mask_dist = dist
        self._mask_dist32 = np.where(np.isfinite(dist), dist, 1e9).astype(np.float32)
        self._member = mask.member
        self._pairs = counted_overlap_pairs(tmpl)
        self._fk_pack = handmodel.kernel_pack(tmpl)
        self._lower32 = tmpl.pose_lower.astype(np.float32)
        self._upper32 = tmpl.pose_upper.astype(np.float32)

    def batch_total(self, sizes: np.ndarray, poses: np.ndarray) -> np.ndarray:
        """Weighted total cost for (P,) particles -> (P,) float32.

        With threads > 1 the particle axis is split into fixed chunks mapped
        over a thread pool (the kernels release the GIL); results are
        identical to the serial path because chunks are independent.
        """
        sizes32 = np.clip(np.atleast_2d(sizes), self.tmpl.size_range[0],
                          self.tmpl.size_range[1]).astype(np.float32)
        poses32 = np.clip(np.atleast_2d(poses), self._lower32,
                          self._upper32).astype(np.float32)
        c32, r32 = fk_batch32(sizes32, poses32, *self._fk_pack)
        if self.threads == 1 or c32.shape[0] < 2 * self.threads:
            return self._eval_chunk(c32, r32)
        bounds = np.linspace(0, c32.shape[0], self.threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            parts = list(pool.map(
                lambda se: self._eval_chunk(c32[se[0]:se[1]], r32[se[0]:se[1]]),
                zip(bounds[:-1], bounds[1:])))
        return np.concatenate(parts)

    def _eval_chunk(self, c32: np.ndarray, r32: np.ndarray) -> np.ndarray:
        k = self.k
        d2m = d2m_costs(c32, r32, self._points32, np.float32(self.d_max))
        m2d = m2d_costs(c32, r32, self._depth32, self._member, self._mask_dist32,
                        np.float32(k.fx), np.float32(k.fy), np.float32(k.cx),
                        np.float32(k.cy), np.float32(0.5 * (k.fx + k.fy)),
                        np.float32(self.d_max))
        ov = overlap_costs(c32, r32, self._pairs)
        w = self.weights
        return (np.float32(w.d2m) * d2m + np.float32(w.m2d) * m2d
                + np.float32(w.overlap) * ov)

    def breakdown(self, l: np.ndarray, p: np.ndarray) -> CostBreakdown:
        """Exact float64 breakdown at one parameter pair."""
        m = handmodel.pose_spheres(self.tmpl, l, p)
        d2m = cost_data_to_model(self.points, m, self.d_max)
        m2d = cost_model_to_data(m, self.frame, self.mask, self.k, self.d_max,
                                 _mask_dist=self._mask_dist)
        ov = cost_overlap(m, self.tmpl)
        total = self.weights.d2m * d2m + self.weights.m2d * m2d + self.weights.overlap * ov
        return CostBreakdown(d2m=d2m, m2d=m2d, overlap=ov, total=total)
