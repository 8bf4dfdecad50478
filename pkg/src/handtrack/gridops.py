"""Exact Euclidean distance transforms (OpenCV precise kernel, scipy shape)."""

from __future__ import annotations

import cv2
import numpy as np


def distance_to_mask(member: np.ndarray) -> np.ndarray:
    """Per-pixel distance (px) to the nearest True pixel; 0 inside."""
    inp = np.logical_not(member).astype(np.uint8)
    return cv2.distanceTransform(inp, cv2.DIST_L2, cv2.DIST_MASK_PRECISE).astype(np.float64)


def distance_within_mask(member: np.ndarray) -> np.ndarray:
    """Per-pixel distance (px) to the nearest False pixel; 0 outside."""
    return cv2.distanceTransform(member.astype(np.uint8), cv2.DIST_L2,
                                 cv2.DIST_MASK_PRECISE).astype(np.float64)
