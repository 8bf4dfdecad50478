"""Per-frame re-initialization: palm center and orientation, planar and
orthogonal finger detection, filtered orientation prediction, and
junction-matching finger classification.

Detected fingers seed a fraction of the swarm each frame, which provides
automatic start-up and recovery from drift without any learned detector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from . import handmodel
from ._kernels import geodesic_hops, grow_within_hops, grow_within_window
from .depthio import CameraIntrinsics, DepthFrame, pixel_to_camera
from .errors import EmptyFrameError
from .gridops import distance_within_mask
from .handmodel import HandTemplate
from .pso import ReinitHints
from .segmentation import HandMask

KIND_PLANAR = "planar"
KIND_ORTHOGONAL = "orthogonal"


@dataclass
class DetectionParams:
    """Finger detection tuning; footprints derive from the hand template."""

    band_min: float = 0.4            # x expected footprint
    band_max: float = 2.5
    orth_window_scale: float = 1.5   # x expected finger width
    min_protrusion_mm: float = 15.0  # how far a tip must stick out toward the camera
    extreme_margin: float = 0.5      # x finger length added to the palm radius
    max_candidates: int = 12


@dataclass
class PalmState:
    """Scalar palm-orientation filter state, advanced once per frame."""

    e_init: float = 0.1
    a1: float = 0.5
    a2: float = 0.5
    center_px: tuple[int, int] = (0, 0)
    center_3d: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta_m: float = 0.0
    theta_p: float = 0.0
    theta_o: float = 0.0
    e_m: float = 0.1
    e_o: float = 0.1
    c: float = 0.0
    theta_m_prev: float | None = None
    prior_prev: float | None = None
    frames_observed: int = 0

    def __post_init__(self) -> None:
        self.e_m = self.e_init
        self.e_o = self.e_init


@dataclass
class DetectedFinger:
    tip_px: tuple[int, int]
    tip: np.ndarray            # (3,) mm
    orientation: np.ndarray    # (3,) unit, base -> tip
    kind: str
    pixel_count: int
    junction: np.ndarray       # (3,) mm, tip displaced by finger length
    flex_est: float = 0.0      # rad, from foreshortening (planar only)
    region: np.ndarray | None = field(default=None, repr=False)


@dataclass
class Classification:
    """Injective detected-finger -> class assignment (0=thumb .. 4=pinky)."""

    assignments: dict[int, int]

    def finger_class(self, detection_index: int) -> int | None:
        return self.assignments.get(detection_index)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = (a + np.pi) % (2.0 * np.pi) - np.pi
    return float(np.pi) if w == -np.pi else float(w)


def palm_center(mask: HandMask, frame: DepthFrame, k: CameraIntrinsics):
    """Distance-transform maximum of the mask and its back-projection."""
    if mask.pixel_count == 0:
        raise EmptyFrameError("palm_center on an empty mask")
    dt = distance_within_mask(mask.member)
    flat = int(np.argmax(dt))  # first maximum: row-major tie-break
    v, u = divmod(flat, mask.width)
    point = pixel_to_camera(u, v, int(frame.depth[v, u]), k)
    return (u, v), point, float(dt[v, u])


def expected_finger_scale(tmpl: HandTemplate, size: np.ndarray, palm_z: float,
                          k: CameraIntrinsics):
    """Expected finger length and width in pixels at the palm's depth."""
    f = 0.5 * (k.fx + k.fy)
    length_mm = float(np.mean(tmpl.finger_lengths * np.asarray(size)[1:6]))
    width_mm = float(2.0 * np.mean(tmpl.finger_radii))
    return length_mm * f / palm_z, width_mm * f / palm_z, length_mm


def detect_planar_fingers(frame: DepthFrame, mask: HandMask, palm_px, palm_3d,
                          palm_radius_px: float, tmpl: HandTemplate,
                          size: np.ndarray, k: CameraIntrinsics,
                          params: DetectionParams,
                          claimed: np.ndarray | None = None):
    """Fingers lying in the image plane, found as far geodesic protrusions.

    Repeatedly takes the unclaimed mask pixel of maximal within-mask hop
    distance from the palm center, grows a component around it up to the
    finger length, and accepts it when its area falls in the footprint band.
    Returns (detections, claimed map).
    """
    if claimed is None:
        claimed = np.zeros_like(mask.member)
    length_px, width_px, length_mm = expected_finger_scale(tmpl, size, palm_3d[2], k)
    footprint = length_px * width_px
    a_min, a_max = params.band_min * footprint, params.band_max * footprint
    min_hops = palm_radius_px + params.extreme_margin * length_px

    hops = geodesic_hops(mask.member, np.int32(palm_px[0]), np.int32(palm_px[1]))
    hops_masked = np.where(claimed, -1, hops)
    found: list[DetectedFinger] = []
    for _ in range(params.max_candidates):
        if len(found) >= 5:
            break
        flat = int(np.argmax(hops_masked))
        v, u = divmod(flat, mask.width)
        if hops_masked[v, u] <= min_hops:
            break
        region = grow_within_hops(mask.member, claimed, np.int32(u), np.int32(v),
                                  np.int32(round(length_px)))
        claimed |= region
        hops_masked[region] = -1
        area = int(region.sum())
        if not (a_min <= area <= a_max):
            continue
        det = _planar_detection(frame, region, (u, v), length_mm, length_px, k)
        if det is not None:
            found.append(det)
    return found, claimed


def _planar_detection(frame, region, tip_px, length_mm, length_px, k):
    vs, us = np.nonzero(region)
    pts = np.column_stack([us, vs]).astype(np.float64)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    axis = evecs[:, int(np.argmax(evals))]
    tipward = np.array([tip_px[0], tip_px[1]]) - pts.mean(axis=0)
    if np.dot(axis, tipward) < 0:
        axis = -axis
    # Foreshortening: a flexed finger shows less than its full length.
    span = centered @ axis
    visible = float(span.max() - span.min())
    ratio = min(visible / max(length_px, 1e-9), 1.0)
    flex = 0.0 if ratio > 0.97 else float(np.arccos(ratio))
    tip_d = int(frame.depth[tip_px[1], tip_px[0]])
    if tip_d == 0:
        inside = frame.depth[vs, us] > 0
        if not inside.any():
            return None
        order = np.argmax(inside)
        tip_px = (int(us[order]), int(vs[order]))
        tip_d = int(frame.depth[tip_px[1], tip_px[0]])
    tip3d = pixel_to_camera(tip_px[0], tip_px[1], tip_d, k)
    direction = np.array([axis[0] * tip_d / k.fx, axis[1] * tip_d / k.fy, 0.0])
    norm = np.linalg.norm(direction)
    if norm == 0:
        return None
    direction /= norm
    return DetectedFinger(tip_px=tip_px, tip=tip3d, orientation=direction,
                          kind=KIND_PLANAR, pixel_count=int(region.sum()),
                          junction=tip3d - direction * length_mm,
                          flex_est=flex, region=region)


def detect_orthogonal_fingers(frame: DepthFrame, mask: HandMask, palm_3d,
                              found: list[DetectedFinger], claimed: np.ndarray,
                              tmpl: HandTemplate, size: np.ndarray,
                              k: CameraIntrinsics, params: DetectionParams):
    """Fingers pointing at the camera, found as nearest unclaimed regions.

    The closest unclaimed mask pixel seeds a window-bounded component; small
    compact regions that protrude toward the camera are fingertips. The
    orientation is the optical axis.
    """
    length_px, width_px, length_mm = expected_finger_scale(tmpl, size, palm_3d[2], k)
    half = max(int(round(0.5 * params.orth_window_scale * width_px)), 2)
    expected_area = np.pi * (0.5 * width_px) ** 2
    a_min, a_max = params.band_min * expected_area, params.band_max * expected_area

    depth = frame.depth.astype(np.int64)
    out = list(found)
    for _ in range(params.max_candidates):
        if len(out) >= 5:
            break
        eligible = mask.member & ~claimed & (depth > 0)
        if not eligible.any():
            break
        cand = np.where(eligible, depth, np.int64(1 << 40))
        flat = int(np.argmin(cand))
        v, u = divmod(flat, mask.width)
        if palm_3d[2] - depth[v, u] < params.min_protrusion_mm:
            break
        region = grow_within_window(mask.member, claimed, np.int32(u), np.int32(v),
                                    np.int64(half))
        claimed |= region
        area = int(region.sum())
        if not (a_min <= area <= a_max):
            continue
        tip3d = pixel_to_camera(u, v, int(depth[v, u]), k)
        direction = np.array([0.0, 0.0, -1.0])
        out.append(DetectedFinger(tip_px=(u, v), tip=tip3d, orientation=direction,
                                  kind=KIND_ORTHOGONAL, pixel_count=area,
                                  junction=tip3d - direction * length_mm,
                                  region=region))
    return out[len(found):], claimed


def measure_palm_theta(mask: HandMask, claimed: np.ndarray, palm_px,
                       tips_px: list[tuple[int, int]],
                       prev_theta: float | None) -> float:
    """Principal-axis angle of the palm segment (mask minus finger regions).

    The PCA axis is only defined modulo pi; the sign is resolved toward the
    detected fingertips, else toward the previous orientation.
    """
    segment = mask.member & ~claimed
    vs, us = np.nonzero(segment)
    if len(us) < 10:
        vs, us = np.nonzero(mask.member)
    pts = np.column_stack([us, vs]).astype(np.float64)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    axis = evecs[:, int(np.argmax(evals))]

    candidates = [axis, -axis]
    if tips_px:
        tip_mean = np.mean(np.asarray(tips_px, dtype=np.float64), axis=0)
        toward = tip_mean - np.array(palm_px, dtype=np.float64)
        pick = candidates[0] if np.dot(candidates[0], toward) >= 0 else candidates[1]
    elif prev_theta is not None:
        thetas = [np.arctan2(c[0], -c[1]) for c in candidates]
        errs = [abs(wrap_angle(t - prev_theta)) for t in thetas]
        pick = candidates[int(np.argmin(errs))]
    else:
        pick = candidates[0] if -candidates[0][1] >= 0 else candidates[1]
    return float(np.arctan2(pick[0], -pick[1]))


def predict_palm_orientation(state: PalmState, theta_m_t: float) -> float:
    """Blend the optimizer's motion-extrapolated orientation with the raw
    measurement, weighting by the running error estimates.

    The measurement error weights the prior and the prior error weights the
    measurement (kept as designed, which inverts the usual Kalman-gain
    convention). All differences are angle-wrapped. Falls back to the raw
    measurement until an optimized orientation exists or when both error
    estimates vanish.
    """
    if state.frames_observed == 0:
        state.theta_p = wrap_angle(theta_m_t)
        state.theta_m = wrap_angle(theta_m_t)
        state.theta_m_prev = state.theta_m
        return state.theta_p

    e_m = abs(wrap_angle(state.theta_o - state.theta_m_prev)) + state.a1 * state.e_m \
        if state.theta_m_prev is not None else state.a1 * state.e_m
    e_o = state.a2 * state.e_o
    if state.prior_prev is not None:
        e_o += abs(wrap_angle(state.theta_o - state.prior_prev))

    prior = wrap_angle(state.theta_o + state.c)
    denom = e_m + e_o
    if denom <= 0.0:
        theta_p = wrap_angle(theta_m_t)
    else:
        theta_p = wrap_angle(prior + (e_o / denom) * wrap_angle(theta_m_t - prior))

    state.e_m = e_m
    state.e_o = e_o
    state.theta_m = wrap_angle(theta_m_t)
    state.theta_m_prev = state.theta_m
    state.prior_prev = prior
    state.theta_p = theta_p
    return theta_p


def observe_optimized(state: PalmState, theta_o_t: float) -> None:
    """Record the optimizer's orientation and refresh the motion constant."""
    theta_o_t = wrap_angle(theta_o_t)
    if state.frames_observed > 0:
        state.c = wrap_angle(theta_o_t - state.theta_o)
    state.theta_o = theta_o_t
    state.frames_observed += 1


def classify_fingers(found: list[DetectedFinger], junctions: np.ndarray) -> Classification:
    """Match detected junctions to model junctions, forcing injectivity.

    Each detection starts at its nearest model junction; on collisions, the
    assignments with the fewest squared class shifts are enumerated and the
    one with the least total junction distance wins.
    """
    n = len(found)
    if n == 0:
        return Classification(assignments={})
    if n > 5:
        raise ValueError("at most five detected fingers can be classified")
    dists = np.array([[np.linalg.norm(f.junction - q) for q in junctions] for f in found])
    initial = dists.argmin(axis=1)
    if len(set(initial.tolist())) == n:
        return Classification(assignments={i: int(initial[i]) for i in range(n)})

    best_change = None
    candidates = []
    for perm in permutations(range(5), n):
        change = int(((np.array(perm) - initial) ** 2).sum())
        if best_change is None or change < best_change:
            best_change = change
            candidates = [perm]
        elif change == best_change:
            candidates.append(perm)
    totals = [sum(dists[i, perm[i]] for i in range(n)) for perm in candidates]
    winner = candidates[int(np.argmin(totals))]
    return Classification(assignments={i: int(winner[i]) for i in range(n)})


def build_hints(cls: Classification, found: list[DetectedFinger], theta_p: float,
                tmpl: HandTemplate) -> ReinitHints:
    """Convert classified detections into per-finger DOF seeds.

    A planar finger reads as an extended finger whose MCP abduction matches
    the in-plane angle between its detected axis and the finger's rest
    direction under the predicted palm orientation; an orthogonal finger is
    flexed toward the camera.
    """
    hints = ReinitHints(palm_theta=theta_p)
    lo = tmpl.pose_lower
    hi = tmpl.pose_upper
    for det_idx, finger in cls.assignments.items():
        det = found[det_idx]
        dofs = np.zeros(4)
        if det.kind == KIND_PLANAR:
            rest = tmpl.finger_dirs[finger]
            c, s = np.cos(theta_p), np.sin(theta_p)
            rest_rot = np.array([c * rest[0] - s * rest[1], s * rest[0] + c * rest[1]])
            d2 = det.orientation[:2]
            norm = np.linalg.norm(d2)
            if norm > 1e-9:
                d2 = d2 / norm
                abd = np.arctan2(rest_rot[0] * d2[1] - rest_rot[1] * d2[0],
                                 float(np.dot(rest_rot, d2)))
                dofs[1] = abd
        else:
            dofs[0] = np.pi / 2.0
        base = 6 + 4 * finger
        dofs = np.clip(dofs, lo[base:base + 4], hi[base:base + 4])
        hints.detected[finger] = True
        hints.dofs[finger] = dofs
        hints.tips[finger] = det.tip
    return hints
