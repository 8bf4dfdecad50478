"""Hand segmentation: connected-component growth from the closest point.

The wrist cut is assumed to already exist in the data as depth voids (the
recording-side wrist band), so voids act as hard flood-fill boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import flood_fill
from .depthio import DepthFrame
from .errors import EmptyFrameError

DEFAULT_DELTA_DEPTH_MM = 20
DEFAULT_MAX_PIXELS = 12000


@dataclass
class HandMask:
    """One connected region of hand pixels."""

    width: int
    height: int
    member: np.ndarray        # (h, w) bool
    closest_pixel: tuple[int, int]
    pixel_count: int
    truncated: bool = False

    def pixels(self) -> np.ndarray:
        """Member pixels as (N, 2) (u, v) rows in row-major order."""
        vs, us = np.nonzero(self.member)
        return np.column_stack([us, vs])


def closest_valid_pixel(frame: DepthFrame) -> tuple[int, int]:
    """Pixel of globally minimal nonzero depth; row-major tie-break."""
    depth = frame.depth
    masked = np.where(depth > 0, depth.astype(np.int64), np.int64(1 << 40))
    flat = int(np.argmin(masked))
    v, u = divmod(flat, frame.width)
    if depth[v, u] == 0:
        raise EmptyFrameError(f"frame {frame.frame_index}: no valid depth values")
    return u, v


def segment_hand(frame: DepthFrame, delta_depth: int = DEFAULT_DELTA_DEPTH_MM,
                 max_pixels: int = DEFAULT_MAX_PIXELS) -> HandMask:
    """Grow the hand mask from the closest valid pixel.

    A neighbor (4-connectivity) joins when its depth is nonzero and within
    delta_depth of the pixel it is reached from; growth stops when the
    frontier empties or max_pixels is reached (mask flagged truncated).
    """
    u, v = closest_valid_pixel(frame)
    member, count, truncated = flood_fill(frame.depth, u, v,
                                          np.int64(delta_depth), np.int64(max_pixels))
    return HandMask(width=frame.width, height=frame.height, member=member,
                    closest_pixel=(u, v), pixel_count=int(count), truncated=bool(truncated))
