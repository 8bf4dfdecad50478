"""Depth frame data model, pinhole projection math, and sequence/label file I/O.

Depth values are unsigned 16-bit millimeters; 0 exclusively means "no
measurement" (a void). All projection math runs in float64.

Sequence file layout (little-endian):
    magic "HTDS" | u32 version=1 | u32 width | u32 height | u32 frame_count
    f32 fx | f32 fy | f32 cx | f32 cy
    frame_count blobs of width*height u16 depths, row-major.

Label file: CSV with header ``frame,wx,wy,wz,t0x,...,p4z`` — wrist plus five
fingertips (thumb to pinky), camera coordinates in mm.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

SEQUENCE_MAGIC = b"HTDS"
SEQUENCE_VERSION = 1

FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")
_LABEL_COLUMNS = ["frame", "wx", "wy", "wz"] + [
    f"{pre}{axis}" for pre in ("t0", "i1", "m2", "r3", "p4") for axis in "xyz"
]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")


# Plausible defaults for a 320x240 close-range depth sensor; always overridable.
DEFAULT_INTRINSICS = CameraIntrinsics(fx=224.5, fy=224.5, cx=159.5, cy=119.5)


@dataclass
class DepthFrame:
    """One depth map: (height, width) uint16 grid of millimeters, 0 = void."""

    width: int
    height: int
    depth: np.ndarray
    frame_index: int = 0

    def __post_init__(self) -> None:
        self.depth = np.ascontiguousarray(self.depth, dtype=np.uint16)
        if self.depth.shape != (self.height, self.width):
            raise ValueError(
                f"depth shape {self.depth.shape} does not match "
                f"(height, width)=({self.height}, {self.width})"
            )

    def valid_mask(self) -> np.ndarray:
        """Boolean map of pixels carrying a measurement."""
        return self.depth > 0


@dataclass
class GroundTruthLabel:
    """Labeled wrist and five fingertip positions (mm) for one frame."""

    frame_index: int
    wrist: np.ndarray
    fingertips: np.ndarray  # (5, 3), thumb -> pinky

    def __post_init__(self) -> None:
        self.wrist = np.asarray(self.wrist, dtype=np.float64).reshape(3)
        self.fingertips = np.asarray(self.fingertips, dtype=np.float64).reshape(5, 3)

    def joints(self) -> np.ndarray:
        """Wrist followed by fingertips as a (6, 3) array."""
        return np.vstack([self.wrist[None, :], self.fingertips])


@dataclass
class DepthSequence:
    """An ordered depth recording plus any ground-truth labels."""

    intrinsics: CameraIntrinsics
    frames: list[DepthFrame]
    labels: dict[int, GroundTruthLabel] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


def pixel_to_camera(u, v, d, k: CameraIntrinsics):
    """Back-project pixel (u, v) at depth d mm to a camera-space point (mm).

    Accepts scalars or same-shaped arrays; depth must be positive.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("cannot back-project a void depth (d must be > 0)")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    x = (u - k.cx) * d / k.fx
    y = (v - k.cy) * d / k.fy
    return np.stack(np.broadcast_arrays(x, y, d), axis=-1)


def camera_to_pixel(point, k: CameraIntrinsics):
    """Project camera-space point(s) (mm) to (u, v, z); z must be positive."""
    p = np.asarray(point, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("cannot project a point at or behind the camera (z <= 0)")
    u = k.fx * p[..., 0] / z + k.cx
    v = k.fy * p[..., 1] / z + k.cy
    return np.stack([u, v, z], axis=-1)


def backproject_pixels(frame: DepthFrame, pixels: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Back-project (u, v) pixel rows using the frame's own depths -> (N, 3) mm."""
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    d = frame.depth[pixels[:, 1], pixels[:, 0]]
    return pixel_to_camera(pixels[:, 0], pixels[:, 1], d, k).reshape(-1, 3)


def save_sequence(path, frames: list[DepthFrame], k: CameraIntrinsics) -> None:
    """Write frames to the binary sequence format (lossless)."""
    path = Path(path)
    if not frames:
        raise ValueError("refusing to write an empty sequence")
    w, h = frames[0].width, frames[0].height
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", SEQUENCE_MAGIC, SEQUENCE_VERSION, w, h, len(frames)))
        fh.write(struct.pack("<ffff", k.fx, k.fy, k.cx, k.cy))
        for fr in frames:
            if (fr.width, fr.height) != (w, h):
                raise ValueError("all frames in a sequence must share one resolution")
            fh.write(fr.depth.astype("<u2").tobytes())


def load_sequence(path, labels_path=None) -> DepthSequence:
    """Load a sequence file; labels come from ``labels_path`` or a sibling CSV.

    Raises FormatError with a distinct diagnostic for a malformed header, a
    dimension mismatch, or a truncated payload.
    """
    path = Path(path)
    raw = path.read_bytes()
    header_size = struct.calcsize("<4sIIII") + struct.calcsize("<ffff")
    if len(raw) < header_size:
        raise FormatError(f"{path}: malformed header (file shorter than header)")
    magic, version, w, h, n = struct.unpack_from("<4sIIII", raw, 0)
    if magic != SEQUENCE_MAGIC:
        raise FormatError(f"{path}: malformed header (bad magic {magic!r})")
    if version != SEQUENCE_VERSION:
        raise FormatError(f"{path}: malformed header (unsupported version {version})")
    fx, fy, cx, cy = struct.unpack_from("<ffff", raw, struct.calcsize("<4sIIII"))
    if w == 0 or h == 0 or fx <= 0 or fy <= 0:
        raise FormatError(f"{path}: malformed header (width={w}, height={h}, fx={fx}, fy={fy})")
    frame_bytes = w * h * 2
    expected = header_size + n * frame_bytes
    if len(raw) < expected:
        raise FormatError(
            f"{path}: truncated payload (expected {expected} bytes for {n} frames, got {len(raw)})"
        )
    if len(raw) > expected:
        raise FormatError(
            f"{path}: dimension mismatch (header says {n} frames of {w}x{h}, "
            f"{len(raw) - expected} trailing bytes)"
        )
    frames = []
    for i in range(n):
        off = header_size + i * frame_bytes
        depth = np.frombuffer(raw, dtype="<u2", count=w * h, offset=off).reshape(h, w)
        frames.append(DepthFrame(width=w, height=h, depth=depth.copy(), frame_index=i))
    k = CameraIntrinsics(fx=float(fx), fy=float(fy), cx=float(cx), cy=float(cy))

    labels: dict[int, GroundTruthLabel] = {}
    if labels_path is None:
        sibling = path.with_suffix(".labels.csv")
        labels_path = sibling if sibling.exists() else None
    if labels_path is not None:
        labels = load_labels(labels_path)
    return DepthSequence(intrinsics=k, frames=frames, labels=labels)


def save_labels(path, labels) -> None:
    """Write ground-truth labels as CSV, ordered by frame index."""
    if isinstance(labels, dict):
        labels = [labels[i] for i in sorted(labels)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LABEL_COLUMNS)
        for lab in labels:
            row = [lab.frame_index] + [f"{v:.6f}" for v in lab.joints().ravel()]
            writer.writerow(row)


def load_labels(path) -> dict[int, GroundTruthLabel]:
    """Read a label CSV into a frame_index -> label mapping."""
    out: dict[int, GroundTruthLabel] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and header != _LABEL_COLUMNS:
            raise FormatError(f"{path}: unexpected label header {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 19:
                raise FormatError(f"{path}: label row needs 19 fields, got {len(row)}")
            idx = int(row[0])
            vals = np.array([float(v) for v in row[1:]], dtype=np.float64)
            out[idx] = GroundTruthLabel(
                frame_index=idx, wrist=vals[:3], fingertips=vals[3:].reshape(5, 3)
            )
    return out
