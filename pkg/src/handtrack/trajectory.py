"""Keyframed (size, pose) trajectory scripts with linear interpolation.

Script format (textual, ``#`` comments allowed)::

    keyframe 0
    size 1 1 1 1 1 1
    pose tx ty tz rx ry rz  f0_flex f0_abd f0_pip f0_dip  ... (26 values)
    keyframe 40
    pose ...

The first keyframe emits one frame; every later ``keyframe N`` emits N frames
interpolating linearly from the previous keyframe to this one (endpoint
included). ``size`` may be omitted to inherit the previous keyframe's size.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError
from .handmodel import N_POSE, N_SIZE


def parse_trajectory(text: str):
    """Parse script text into a list of (hold_frames, size, pose) keyframes."""
    keyframes = []
    count = None
    size = None
    pose = None

    def flush(line_no):
        nonlocal count, size, pose
        if count is None:
            return
        if pose is None:
            raise FormatError(f"trajectory line {line_no}: keyframe without a pose")
        ksize = size if size is not None else (keyframes[-1][1] if keyframes else None)
        if ksize is None:
            raise FormatError(f"trajectory line {line_no}: first keyframe needs a size")
        keyframes.append((count, np.asarray(ksize, dtype=np.float64),
                          np.asarray(pose, dtype=np.float64)))
        count, size, pose = None, None, None

    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0].lower()
        if head == "keyframe":
            flush(i)
            if len(tokens) != 2:
                raise FormatError(f"trajectory line {i}: keyframe takes one frame count")
            count = int(tokens[1])
            if count < 0:
                raise FormatError(f"trajectory line {i}: negative frame count")
        elif head == "size":
            if len(tokens) != 1 + N_SIZE:
                raise FormatError(f"trajectory line {i}: size needs {N_SIZE} values")
            size = [float(t) for t in tokens[1:]]
        elif head == "pose":
            if len(tokens) != 1 + N_POSE:
                raise FormatError(f"trajectory line {i}: pose needs {N_POSE} values")
            pose = [float(t) for t in tokens[1:]]
        else:
            raise FormatError(f"trajectory line {i}: unknown directive {head!r}")
    flush(len(text.splitlines()))
    if not keyframes:
        raise FormatError("trajectory script has no keyframes")
    return keyframes


def expand_keyframes(keyframes):
    """Expand keyframes into a per-frame list of (size, pose) pairs."""
    frames = [(keyframes[0][1].copy(), keyframes[0][2].copy())]
    for count, size, pose in keyframes[1:]:
        prev_size, prev_pose = frames[-1]
        n = max(count, 1)
        for step in range(1, n + 1):
            a = step / n
            frames.append(((1 - a) * prev_size + a * size, (1 - a) * prev_pose + a * pose))
    return frames


def load_trajectory(path):
    """Read and expand a trajectory script file."""
    return expand_keyframes(parse_trajectory(Path(path).read_text()))


def format_trajectory(keyframes) -> str:
    """Serialize keyframes back to script text."""
    lines = []
    for count, size, pose in keyframes:
        lines.append(f"keyframe {count}")
        lines.append("size " + " ".join(f"{v:.6g}" for v in size))
        lines.append("pose " + " ".join(f"{v:.6g}" for v in pose))
    return "\n".join(lines) + "\n"
