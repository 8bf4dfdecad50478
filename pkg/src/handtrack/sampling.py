"""Pixel selection for model fitting: uniform seeds plus gradient-guided
hierarchical refinements near depth discontinuities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .depthio import CameraIntrinsics, DepthFrame, backproject_pixels
from .errors import EmptyFrameError
from .segmentation import HandMask

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T

MODE_RANDOM = "random"
MODE_HIERARCHICAL = "hierarchical"


@dataclass
class GradientMap:
    """Summed absolute Sobel response of the depth map inside the mask."""

    width: int
    height: int
    g: np.ndarray  # (h, w) float64, zero outside the mask


@dataclass
class SampleSet:
    """Selected pixels and their camera-space back-projections."""

    s1: np.ndarray      # (n1, 2) initial samples, (u, v)
    s2: np.ndarray      # (n2, 2) hierarchical samples
    points: np.ndarray  # (n1 + n2, 3) mm

    @property
    def n_s(self) -> int:
        return self.points.shape[0]

    def all_pixels(self) -> np.ndarray:
        return np.vstack([self.s1, self.s2]) if len(self.s2) else self.s1.copy()


def gradient_map(frame: DepthFrame, mask: HandMask) -> GradientMap:
    """Per-pixel |Sobel_x . D| + |Sobel_y . D|, zeroed outside the mask.

    The 3x3 windows read depth 0 at voids and beyond the image border.
    """
    depth = frame.depth.astype(np.float64)
    gx = ndimage.correlate(depth, SOBEL_X, mode="constant", cval=0.0)
    gy = ndimage.correlate(depth, SOBEL_Y, mode="constant", cval=0.0)
    g = np.abs(gx) + np.abs(gy)
    g[~mask.member] = 0.0
    return GradientMap(width=frame.width, height=frame.height, g=g)


def sample(frame: DepthFrame, mask: HandMask, grad: GradientMap, n1: int,
           t1: float, t2: float, window: int, k: CameraIntrinsics,
           rng: np.random.Generator) -> SampleSet:
    """Draw n1 uniform seeds, then one hierarchical candidate per seed whose
    gradient exceeds t1; the candidate joins when it lands in-mask and its
    depth differs from the seed's by more than t2 mm."""
    mask_pixels = mask.pixels()
    if len(mask_pixels) == 0:
        raise EmptyFrameError("cannot sample from an empty mask")
    if n1 < 1:
        raise ValueError("n1 must be >= 1")

    if n1 >= len(mask_pixels):
        s1 = mask_pixels.copy()
    else:
        idx = np.sort(rng.choice(len(mask_pixels), size=n1, replace=False))
        s1 = mask_pixels[idx]

    depth = frame.depth.astype(np.int64)
    seeds = s1[grad.g[s1[:, 1], s1[:, 0]] > t1]
    s2 = np.empty((0, 2), dtype=np.int64)
    if len(seeds):
        cand = seeds + rng.integers(-window, window + 1, size=(len(seeds), 2))
        ok = ((cand[:, 0] >= 0) & (cand[:, 0] < frame.width)
              & (cand[:, 1] >= 0) & (cand[:, 1] < frame.height))
        cand, seeds = cand[ok], seeds[ok]
        ok = mask.member[cand[:, 1], cand[:, 0]]
        cand, seeds = cand[ok], seeds[ok]
        ok = np.abs(depth[cand[:, 1], cand[:, 0]] - depth[seeds[:, 1], seeds[:, 0]]) > t2
        s2 = cand[ok]

    pixels = np.vstack([s1, s2]) if len(s2) else s1
    return SampleSet(s1=s1, s2=s2, points=backproject_pixels(frame, pixels, k))


def sample_fixed_total(frame: DepthFrame, mask: HandMask, grad: GradientMap,
                       total: int, n1: int, t1: float, t2: float, window: int,
                       k: CameraIntrinsics, rng: np.random.Generator,
                       mode: str = MODE_HIERARCHICAL) -> SampleSet:
    """Sampling with a fixed total budget (costs comparable across frames).

    Hierarchical mode draws n1 seeds plus refinements, then trims surplus
    hierarchical samples at random or tops up with extra uniform seeds.
    Random mode is the pure-uniform baseline at the same budget.
    """
    if mode == MODE_RANDOM:
        ss = sample(frame, mask, grad, total, np.inf, t2, window, k, rng)
        return ss
    if mode != MODE_HIERARCHICAL:
        raise ValueError(f"unknown sampling mode {mode!r}")

    ss = sample(frame, mask, grad, min(n1, total), t1, t2, window, k, rng)
    n = ss.n_s
    if n > total:
        # Trim hierarchical samples first so every survivor keeps its seed.
        surplus = n - total
        keep = np.sort(rng.choice(len(ss.s2), size=len(ss.s2) - surplus, replace=False))
        s2 = ss.s2[keep]
        pixels = np.vstack([ss.s1, s2]) if len(s2) else ss.s1
        return SampleSet(s1=ss.s1, s2=s2, points=backproject_pixels(frame, pixels, k))
    if n < total:
        free = mask.member.copy()
        free[ss.s1[:, 1], ss.s1[:, 0]] = False
        vs, us = np.nonzero(free)
        extra_n = min(total - n, len(us))
        if extra_n > 0:
            idx = np.sort(rng.choice(len(us), size=extra_n, replace=False))
            s1 = np.vstack([ss.s1, np.column_stack([us[idx], vs[idx]])])
            pixels = np.vstack([s1, ss.s2]) if len(ss.s2) else s1
            return SampleSet(s1=s1, s2=ss.s2, points=backproject_pixels(frame, pixels, k))
    return ss
