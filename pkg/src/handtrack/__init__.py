"""CPU hand-articulation tracking on depth sequences with an adaptive
48-sphere hand model, hierarchical pixel sampling, swarm optimization, and
per-frame finger-detection re-initialization."""

from .config import RunConfig, apply_overrides, load_config
from .depthio import (CameraIntrinsics, DEFAULT_INTRINSICS, DepthFrame,
                      DepthSequence, GroundTruthLabel, load_sequence,
                      save_sequence)
from .handmodel import HandTemplate, SphereModel, load_template
from .pipeline import EvalReport, FrameResult, Tracker, evaluate, track_sequence
from .renderer import NoiseSpec, RenderOutput, render, render_pose

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "DEFAULT_INTRINSICS", "DepthFrame", "DepthSequence",
    "EvalReport", "FrameResult", "GroundTruthLabel", "HandTemplate",
    "NoiseSpec", "RenderOutput", "RunConfig", "SphereModel", "Tracker",
    "apply_overrides", "evaluate", "load_config", "load_sequence",
    "load_template", "render", "render_pose", "save_sequence",
    "track_sequence", "__version__",
]
