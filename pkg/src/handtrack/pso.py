"""Modified particle swarm optimization over joint (pose, size) parameters.

Particles carry a pose that moves between generations and a size vector that
is frozen at initialization; the first generation is evaluated with the
previous frame's size for every particle so pose settles before size
competes. Per-finger detection hints re-seed a fixed fraction of particles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import handmodel
from .handmodel import N_POSE, N_SIZE, HandTemplate
from .objective import FrameObjective


@dataclass
class SwarmConfig:
    n_particles: int = 256
    n_generations: int = 6
    sigma_trans_mm: float = 7.0      # translation DOF noise
    sigma_rot_rad: float = 0.08      # rotation and finger DOF noise
    sigma_size: float = 0.01
    hint_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.n_particles < 2:
            raise ValueError("need at least 2 particles")
        if self.n_generations < 1:
            raise ValueError("need at least 1 generation")
        if self.sigma_size < 0:
            raise ValueError("sigma_size must be >= 0")

    def pose_sigma(self) -> np.ndarray:
        sigma = np.full(N_POSE, self.sigma_rot_rad)
        sigma[0:3] = self.sigma_trans_mm
        return sigma


@dataclass
class ReinitHints:
    """Measured per-finger DOF seeds and the predicted palm orientation."""

    detected: np.ndarray = field(default_factory=lambda: np.zeros(5, dtype=bool))
    dofs: np.ndarray = field(default_factory=lambda: np.zeros((5, 4)))
    tips: np.ndarray = field(default_factory=lambda: np.zeros((5, 3)))
    palm_theta: float | None = None

    @property
    def n_detected(self) -> int:
        return int(self.detected.sum())


@dataclass
class TrackState:
    """Optimized parameters carried between frames."""

    pose: np.ndarray
    size: np.ndarray
    frame_index: int = -1

    def __post_init__(self) -> None:
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(N_POSE)
        self.size = np.asarray(self.size, dtype=np.float64).reshape(N_SIZE)


@dataclass
class Particles:
    poses: np.ndarray  # (P, 26)
    sizes: np.ndarray  # (P, 6), frozen after init


@dataclass
class SwarmDiagnostics:
    """Per-run evidence for the swarm's structural properties."""

    best_cost_per_gen: list[float] = field(default_factory=list)
    alpha_pair_error: float = 0.0     # max |a1 + a2 - 2| over all draws
    best_generation: int = -1
    best_particle: int = -1


def init_particles(tmpl: HandTemplate, prev: TrackState, hints: ReinitHints | None,
                   cfg: SwarmConfig, rng: np.random.Generator) -> Particles:
    """Scatter particles around the previous result, re-seeding hinted DOFs.

    Size noise is applied only when all five fingers were detected and
    classified this frame; otherwise every particle keeps the previous size.
    """
    P = cfg.n_particles
    sigma = cfg.pose_sigma()
    poses = prev.pose[None, :] + rng.normal(0.0, 1.0, (P, N_POSE)) * sigma[None, :]

    adapt_size = (hints is not None and hints.n_detected == 5 and cfg.sigma_size > 0)
    if adapt_size:
        sizes = prev.size[None, :] + rng.normal(0.0, cfg.sigma_size, (P, N_SIZE))
    else:
        sizes = np.tile(prev.size, (P, 1))

    n_hint = int(cfg.hint_fraction * P)
    if hints is not None and n_hint > 0:
        if hints.palm_theta is not None:
            # Align the in-plane orientation with the predicted palm angle.
            delta = _wrap(hints.palm_theta - handmodel.palm_orientation_of_pose(prev.pose))
            chosen = rng.choice(P, size=n_hint, replace=False)
            poses[chosen, 5] = prev.pose[5] + delta + rng.normal(0.0, cfg.sigma_rot_rad, n_hint)
        for f in range(5):
            if not hints.detected[f]:
                continue
            chosen = rng.choice(P, size=n_hint, replace=False)
            noise = rng.normal(0.0, cfg.sigma_rot_rad, (n_hint, 4))
            poses[chosen, 6 + 4 * f: 10 + 4 * f] = hints.dofs[f][None, :] + noise

    sizes = np.clip(sizes, tmpl.size_range[0], tmpl.size_range[1])
    poses = np.clip(poses, tmpl.pose_lower, tmpl.pose_upper)
    return Particles(poses=poses, sizes=sizes)


def run_generations(objective: FrameObjective, particles: Particles,
                    cfg: SwarmConfig, prev: TrackState,
                    rng: np.random.Generator):
    """Evaluate/move the swarm and return (pose, size, cost, diagnostics).

    Update rule per generation: p <- p + a1*(b - p) + a2*(g - p) with
    a1 ~ U[0.5, 1.5] drawn fresh per particle and DOF, and a2 = 2 - a1
    componentwise. Personal/global bests store poses; the global best
    remembers its owner so the owner's frozen size is returned. Cost ties
    break toward the lowest particle index.
    """
    tmpl = objective.tmpl
    poses = particles.poses
    sizes = particles.sizes
    P = poses.shape[0]

    pb_cost = np.full(P, np.inf, dtype=np.float32)
    pb_pose = poses.copy()
    g_cost = np.float32(np.inf)
    g_pose = poses[0].copy()
    g_index = 0
    diag = SwarmDiagnostics()

    prev_size_tile = np.tile(prev.size, (P, 1))
    for gen in range(cfg.n_generations):
        eval_sizes = prev_size_tile if gen == 0 else sizes
        costs = objective.batch_total(eval_sizes, poses)

        better = costs < pb_cost
        pb_cost[better] = costs[better]
        pb_pose[better] = poses[better]
        best_i = int(np.argmin(costs))  # first minimum: lowest index on ties
        if costs[best_i] < g_cost:
            g_cost = costs[best_i]
            g_pose = poses[best_i].copy()
            g_index = best_i
            diag.best_generation = gen
            diag.best_particle = best_i
        diag.best_cost_per_gen.append(float(g_cost))

        a1 = rng.uniform(0.5, 1.5, size=(P, N_POSE))
        a2 = 2.0 - a1
        diag.alpha_pair_error = max(diag.alpha_pair_error,
                                    float(np.abs(a1 + a2 - 2.0).max()))
        poses += a1 * (pb_pose - poses) + a2 * (g_pose[None, :] - poses)
        np.clip(poses, tmpl.pose_lower, tmpl.pose_upper, out=poses)

    return g_pose.copy(), sizes[g_index].copy(), float(g_cost), diag


def _wrap(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = (angle + np.pi) % (2.0 * np.pi) - np.pi
    return float(np.pi) if a == -np.pi else float(a)
