"""Adaptive sphere hand model: size/pose parameters and forward kinematics.

The model has 48 spheres: a 4x4 palm plate (16), two connector spheres hidden
at the palm/thumb junction, and 6 spheres per finger (2 per phalanx). Pose is
26 DOF: global translation (3) + global rotation (3, intrinsic XYZ Euler) +
per finger (thumb..pinky) MCP flex, MCP abduction, PIP flex, DIP flex.
Size is 6 scale factors: l[0] scales the palm plate (extent and radii) and
every finger base; l[1..5] scale the phalanx lengths of one finger each.
Finger sphere radii are fixed — finger width is not a model parameter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

N_SPHERES = 48
N_POSE = 26
N_SIZE = 6

PART_PALM = 0
PART_THUMB_BASE = 1
PART_FINGERS = (2, 3, 4, 5, 6)  # thumb..pinky
PART_NAMES = ("palm", "thumb_base", "thumb", "index", "middle", "ring", "pinky")

_PALM_NORMAL = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class HandTemplate:
    """Immutable neutral geometry the size vector scales."""

    version: int
    palm_centers: np.ndarray      # (16, 3) local mm at unit scale
    palm_radius: float
    wrist_local: np.ndarray       # (3,)
    finger_bases: np.ndarray      # (5, 3) thumb..pinky
    finger_dirs: np.ndarray       # (5, 3) unit rest directions
    finger_lengths: np.ndarray    # (5,) total chain length
    phalanx_fractions: np.ndarray  # (3,) of total length
    sphere_fractions: np.ndarray  # (6,) of total length
    finger_radii: np.ndarray      # (5, 6)
    connector_offsets: np.ndarray  # (2,) along the thumb rest direction
    connector_radii: np.ndarray   # (2,)
    pose_lower: np.ndarray        # (26,)
    pose_upper: np.ndarray        # (26,)
    size_range: tuple[float, float]
    part_ids: np.ndarray          # (48,) int
    fingertip_sphere: np.ndarray  # (5,) sphere index of each distal-most sphere

    @property
    def flex_axes(self) -> np.ndarray:
        """Rest flexion axis per finger (palm normal x rest direction)."""
        a = np.cross(np.broadcast_to(_PALM_NORMAL, (5, 3)), self.finger_dirs)
        return a / np.linalg.norm(a, axis=1, keepdims=True)


@dataclass
class SphereModel:
    """A posed model: 48 centers (mm, camera space), radii, and part labels."""

    centers: np.ndarray  # (48, 3)
    radii: np.ndarray    # (48,)
    parts: np.ndarray    # (48,) int, indices into PART_NAMES

    def fingertip_centers(self, tmpl: HandTemplate) -> np.ndarray:
        return self.centers[tmpl.fingertip_sphere]


def default_template_path() -> Path:
    return Path(resources.files("handtrack").joinpath("data/hand_template_v1.json"))


def load_template(path=None) -> HandTemplate:
    """Build a HandTemplate from a fixture file (default: bundled v1)."""
    raw = json.loads(Path(path or default_template_path()).read_text())
    palm = raw["palm"]
    gx, gy = np.meshgrid(palm["grid_x"], palm["grid_y"])
    palm_centers = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])

    fingers = raw["fingers"]
    dirs = np.array([f["rest_dir"] for f in fingers], dtype=np.float64)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    lim = raw["limits"]
    lower = np.empty(N_POSE)
    upper = np.empty(N_POSE)
    lower[0], upper[0] = lim["translation_x_mm"]
    lower[1], upper[1] = lim["translation_y_mm"]
    lower[2], upper[2] = lim["translation_z_mm"]
    lower[3:6], upper[3:6] = lim["rotation_rad"][0], lim["rotation_rad"][1]
    per_finger_lo = np.deg2rad(
        [lim["mcp_flex_deg"][0], lim["mcp_abduct_deg"][0], lim["pip_flex_deg"][0], lim["dip_flex_deg"][0]]
    )
    per_finger_hi = np.deg2rad(
        [lim["mcp_flex_deg"][1], lim["mcp_abduct_deg"][1], lim["pip_flex_deg"][1], lim["dip_flex_deg"][1]]
    )
    for f in range(5):
        lower[6 + 4 * f: 10 + 4 * f] = per_finger_lo
        upper[6 + 4 * f: 10 + 4 * f] = per_finger_hi

    part_ids = np.concatenate(
        [np.full(16, PART_PALM), np.full(2, PART_THUMB_BASE)]
        + [np.full(6, PART_FINGERS[f]) for f in range(5)]
    )
    fingertip_sphere = np.array([18 + 6 * f + 5 for f in range(5)])

    return HandTemplate(
        version=int(raw["version"]),
        palm_centers=palm_centers,
        palm_radius=float(palm["radius"]),
        wrist_local=np.asarray(raw["wrist"], dtype=np.float64),
        finger_bases=np.array([f["base"] for f in fingers], dtype=np.float64),
        finger_dirs=dirs,
        finger_lengths=np.array([f["length"] for f in fingers], dtype=np.float64),
        phalanx_fractions=np.asarray(raw["phalanx_fractions"], dtype=np.float64),
        sphere_fractions=np.asarray(raw["sphere_fractions"], dtype=np.float64),
        finger_radii=np.array([f["radii"] for f in fingers], dtype=np.float64),
        connector_offsets=np.asarray(raw["thumb_connectors"]["offsets"], dtype=np.float64),
        connector_radii=np.asarray(raw["thumb_connectors"]["radii"], dtype=np.float64),
        pose_lower=lower,
        pose_upper=upper,
        size_range=(float(raw["size_range"][0]), float(raw["size_range"][1])),
        part_ids=part_ids,
        fingertip_sphere=fingertip_sphere,
    )


def neutral_pose(tmpl: HandTemplate, translation=(0.0, 0.0, 400.0)) -> np.ndarray:
    """Open-hand pose at a given translation (all joint angles zero)."""
    p = np.zeros(N_POSE)
    p[0:3] = translation
    return p


def clamp_params(tmpl: HandTemplate, l: np.ndarray, p: np.ndarray):
    """Componentwise clamp of size and pose to their limit intervals."""
    l = np.clip(np.asarray(l, dtype=np.float64), tmpl.size_range[0], tmpl.size_range[1])
    p = np.clip(np.asarray(p, dtype=np.float64), tmpl.pose_lower, tmpl.pose_upper)
    return l, p


def _rotate_about(axis: np.ndarray, v: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Rodrigues rotation of v about unit axis, batched over leading dims."""
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    return v * c + np.cross(axis, v) * s + axis * (np.sum(axis * v, axis=-1, keepdims=True)) * (1.0 - c)


def _rotate_z(v: np.ndarray, theta: np.ndarray) -> np.ndarray:
    c = np.cos(theta)
    s = np.sin(theta)
    out = np.empty_like(v)
    out[..., 0] = c * v[..., 0] - s * v[..., 1]
    out[..., 1] = s * v[..., 0] + c * v[..., 1]
    out[..., 2] = v[..., 2]
    return out


def pose_spheres_batch(tmpl: HandTemplate, sizes: np.ndarray, poses: np.ndarray):
    """Forward kinematics for a batch: (P,6) sizes, (P,26) poses.

    Returns (centers (P,48,3), radii (P,48)). Inputs are clamped first.
    """
    sizes = np.atleast_2d(np.asarray(sizes, dtype=np.float64))
    poses = np.atleast_2d(np.asarray(poses, dtype=np.float64))
    P = poses.shape[0]
    sizes = np.clip(sizes, tmpl.size_range[0], tmpl.size_range[1])
    poses = np.clip(poses, tmpl.pose_lower, tmpl.pose_upper)

    l0 = sizes[:, 0]
    centers = np.empty((P, N_SPHERES, 3))
    radii = np.empty((P, N_SPHERES))

    # Palm plate: positions and radii scale with l0.
    centers[:, :16] = tmpl.palm_centers[None, :, :] * l0[:, None, None]
    radii[:, :16] = tmpl.palm_radius * l0[:, None]

    # Thumb connectors sit on the palm side of the thumb junction (l0-scaled).
    conn = tmpl.finger_bases[0][None, None, :] + tmpl.finger_dirs[0][None, None, :] * tmpl.connector_offsets[None, :, None]
    centers[:, 16:18] = conn * l0[:, None, None]
    radii[:, 16:18] = tmpl.connector_radii[None, :] * l0[:, None]

    flex_axes = tmpl.flex_axes
    boundaries = np.concatenate([[0.0], np.cumsum(tmpl.phalanx_fractions)])  # 0, f1, f1+f2, 1
    for f in range(5):
        li = sizes[:, 1 + f]
        T = tmpl.finger_lengths[f]
        angles = poses[:, 6 + 4 * f: 10 + 4 * f]  # flex, abduct, pip, dip
        base = tmpl.finger_bases[f][None, :] * l0[:, None]

        d0 = _rotate_z(np.broadcast_to(tmpl.finger_dirs[f], (P, 3)), angles[:, 1])
        axis = _rotate_z(np.broadcast_to(flex_axes[f], (P, 3)), angles[:, 1])
        d1 = _rotate_about(axis, d0, angles[:, 0])
        d2 = _rotate_about(axis, d1, angles[:, 2])
        d3 = _rotate_about(axis, d2, angles[:, 3])

        seg_dirs = (d1, d2, d3)
        seg_starts = [base]
        for s in range(2):
            length = (boundaries[s + 1] - boundaries[s]) * T
            seg_starts.append(seg_starts[s] + seg_dirs[s] * (length * li)[:, None])

        sphere_base = 18 + 6 * f
        for j, frac in enumerate(tmpl.sphere_fractions):
            s = int(np.searchsorted(boundaries[1:3], frac, side="right"))
            local = (frac - boundaries[s]) * T
            centers[:, sphere_base + j] = seg_starts[s] + seg_dirs[s] * (local * li)[:, None]
        radii[:, sphere_base: sphere_base + 6] = tmpl.finger_radii[f][None, :]

    R = Rotation.from_euler("XYZ", poses[:, 3:6]).as_matrix().reshape(P, 3, 3)
    centers = np.einsum("pij,pkj->pki", R, centers) + poses[:, None, 0:3]
    return centers, radii


def pose_spheres(tmpl: HandTemplate, l: np.ndarray, p: np.ndarray) -> SphereModel:
    """Pose the 48-sphere model from one (size, pose) pair."""
    centers, radii = pose_spheres_batch(tmpl, np.asarray(l)[None, :], np.asarray(p)[None, :])
    return SphereModel(centers=centers[0], radii=radii[0], parts=tmpl.part_ids.copy())


def kernel_pack(tmpl: HandTemplate) -> tuple:
    """Template geometry as the float32 argument tuple of the FK kernel."""
    boundaries = np.concatenate([[0.0], np.cumsum(tmpl.phalanx_fractions)])
    seg_len = np.outer(tmpl.finger_lengths, tmpl.phalanx_fractions)
    sph_seg = np.empty((5, 6), dtype=np.int8)
    sph_off = np.empty((5, 6), dtype=np.float32)
    for f in range(5):
        for j, frac in enumerate(tmpl.sphere_fractions):
            s = int(np.searchsorted(boundaries[1:3], frac, side="right"))
            sph_seg[f, j] = s
            sph_off[f, j] = (frac - boundaries[s]) * tmpl.finger_lengths[f]
    conn_local = (tmpl.finger_bases[0][None, :]
                  + tmpl.finger_dirs[0][None, :] * tmpl.connector_offsets[:, None])
    f32 = lambda a: np.ascontiguousarray(a, dtype=np.float32)
    return (f32(tmpl.palm_centers), np.float32(tmpl.palm_radius), f32(conn_local),
            f32(tmpl.connector_radii), f32(tmpl.finger_bases), f32(tmpl.finger_dirs),
            f32(tmpl.flex_axes), f32(seg_len), sph_seg, sph_off,
            f32(tmpl.finger_radii))


def fingertip_positions(tmpl: HandTemplate, m: SphereModel) -> np.ndarray:
    """Centers of the distal-most sphere per finger, thumb..pinky -> (5, 3)."""
    return m.centers[tmpl.fingertip_sphere].copy()


def wrist_position(tmpl: HandTemplate, l: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Wrist point (palm plate bottom-edge center) in camera space."""
    l, p = clamp_params(tmpl, l, p)
    R = Rotation.from_euler("XYZ", p[3:6]).as_matrix()
    return R @ (tmpl.wrist_local * l[0]) + p[0:3]


def joint_positions(tmpl: HandTemplate, l: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Wrist plus five fingertip centers -> (6, 3), the evaluation joints."""
    m = pose_spheres(tmpl, l, p)
    return np.vstack([wrist_position(tmpl, l, p)[None, :], fingertip_positions(tmpl, m)])


def palm_orientation_of_pose(p: np.ndarray) -> float:
    """In-plane palm orientation angle implied by the global rotation.

    Zero when the fingers point up in the image (-y); positive rotation about
    the optical axis increases it.
    """
    R = Rotation.from_euler("XYZ", np.asarray(p)[3:6]).as_matrix()
    v = -R[:, 1]  # image of the finger-ward axis (0, -1, 0)
    return float(np.arctan2(v[0], -v[1]))


def junction_positions(tmpl: HandTemplate, l0: float, theta: float, palm_center: np.ndarray) -> np.ndarray:
    """Model finger-base junctions under an in-plane orientation -> (5, 3).

    Used by finger classification: the template bases are scaled by l0,
    rotated about the optical axis by theta, and placed at the measured palm
    center.
    """
    bases = tmpl.finger_bases * l0
    rotated = _rotate_z(bases, np.full(5, theta))
    return rotated + np.asarray(palm_center, dtype=np.float64)[None, :]
