from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from handtrack import handmodel
from handtrack._kernels import fk_batch32
from handtrack.handmodel import (clamp_params, fingertip_positions,
                                 joint_positions, junction_positions,
                                 neutral_pose, palm_orientation_of_pose,
                                 pose_spheres, pose_spheres_batch)

FIXTURE = Path(__file__).parent / "data" / "canonical_spheres.npz"


def random_params(tmpl, rng, n=1):
    sizes = rng.uniform(0.4, 1.6, (n, 6))
    poses = np.empty((n, 26))
    poses[:, 0:3] = rng.uniform([-300, -300, 100], [300, 300, 1200], (n, 3))
    poses[:, 3:6] = rng.uniform(-np.pi, np.pi, (n, 3))
    poses[:, 6:] = rng.uniform(tmpl.pose_lower[6:], tmpl.pose_upper[6:], (n, 20))
    return sizes, poses


def test_canonical_layout_matches_pinned_fixture(tmpl):
    m = pose_spheres(tmpl, np.ones(6), np.zeros(26))
    ref = np.load(FIXTURE)
    assert np.allclose(m.centers, ref["centers"], atol=1e-12)
    assert np.allclose(m.radii, ref["radii"], atol=1e-12)
    assert np.array_equal(m.parts, ref["parts"])
    assert np.allclose(fingertip_positions(tmpl, m), ref["fingertips"], atol=1e-12)


def test_sphere_census(tmpl):
    m = pose_spheres(tmpl, np.ones(6), np.zeros(26))
    assert len(m.centers) == 48
    assert (m.radii > 0).all()
    counts = np.bincount(m.parts, minlength=7)
    assert counts[handmodel.PART_PALM] == 16
    assert counts[handmodel.PART_THUMB_BASE] == 2
    assert all(counts[p] == 6 for p in handmodel.PART_FINGERS)


def test_sphere_count_invariant_under_parameters(tmpl):
    rng = np.random.default_rng(3)
    sizes, poses = random_params(tmpl, rng, 20)
    centers, radii = pose_spheres_batch(tmpl, sizes, poses)
    assert centers.shape == (20, 48, 3)
    assert (radii > 0).all()


def test_translation_equivariance_exact(tmpl):
    base = pose_spheres(tmpl, np.ones(6), np.zeros(26))
    p = np.zeros(26)
    p[0:3] = (10.0, 0.0, 0.0)
    moved = pose_spheres(tmpl, np.ones(6), p)
    assert np.allclose(moved.centers, base.centers + np.array([10.0, 0.0, 0.0]), atol=1e-12)


def test_rigid_rotation_equivariance(tmpl):
    rng = np.random.default_rng(4)
    for _ in range(10):
        euler = rng.uniform(-np.pi, np.pi, 3)
        t = rng.uniform([-100, -100, 50], [100, 100, 400])
        p = np.zeros(26)
        p[0:3] = t
        p[3:6] = euler
        p[6:] = rng.uniform(tmpl.pose_lower[6:], tmpl.pose_upper[6:])
        local = p.copy()
        local[0:6] = 0.0
        R = Rotation.from_euler("XYZ", euler).as_matrix()
        base = pose_spheres(tmpl, np.ones(6), local)
        posed = pose_spheres(tmpl, np.ones(6), p)
        assert np.allclose(posed.centers, base.centers @ R.T + t, atol=1e-9)


def test_fingertips_rotation_equivariance(tmpl):
    euler = np.array([0.3, -0.2, 0.9])
    R = Rotation.from_euler("XYZ", euler).as_matrix()
    p = np.zeros(26)
    p[3:6] = euler
    tips = fingertip_positions(tmpl, pose_spheres(tmpl, np.ones(6), p))
    canonical = fingertip_positions(tmpl, pose_spheres(tmpl, np.ones(6), np.zeros(26)))
    assert np.allclose(tips, canonical @ R.T, atol=1e-9)


def test_doubling_index_scale_doubles_chain_only(tmpl):
    l = np.ones(6)
    l2 = l.copy()
    l2[2] = 1.3  # index scale, clamped range keeps 2x out of reach; use ratio check
    base = pose_spheres(tmpl, l, np.zeros(26))
    grown = pose_spheres(tmpl, l2, np.zeros(26))
    mcp = tmpl.finger_bases[1]  # index base at unit palm scale
    tip_base = fingertip_positions(tmpl, base)[1]
    tip_grown = fingertip_positions(tmpl, grown)[1]
    d0 = np.linalg.norm(tip_base - mcp)
    d1 = np.linalg.norm(tip_grown - mcp)
    assert d1 / d0 == pytest.approx(1.3, abs=1e-9)
    index_spheres = np.arange(18 + 6, 18 + 12)
    others = np.setdiff1d(np.arange(48), index_spheres)
    assert np.allclose(base.centers[others], grown.centers[others], atol=1e-12)


def test_size_monotonicity_all_fingers(tmpl):
    for f in range(5):
        lengths = []
        for scale in (0.6, 1.0, 1.4):
            l = np.ones(6)
            l[1 + f] = scale
            m = pose_spheres(tmpl, l, np.zeros(26))
            tip = fingertip_positions(tmpl, m)[f]
            lengths.append(np.linalg.norm(tip - tmpl.finger_bases[f]))
        assert lengths[0] < lengths[1] < lengths[2]


def test_mcp_right_angle_matches_hand_trigonometry(tmpl):
    # Middle finger flexed 90 deg at the MCP: the whole chain points along -z
    # from its base, so the distal sphere sits at base + (0, 0, -offset).
    p = np.zeros(26)
    p[6 + 4 * 2] = np.pi / 2
    m = pose_spheres(tmpl, np.ones(6), p)
    tip = fingertip_positions(tmpl, m)[2]
    offset = tmpl.sphere_fractions[-1] * tmpl.finger_lengths[2]
    expect = tmpl.finger_bases[2] + np.array([0.0, 0.0, -offset])
    assert np.allclose(tip, expect, atol=1e-9)


def test_phalanx_sphere_collinearity(tmpl):
    rng = np.random.default_rng(5)
    sizes, poses = random_params(tmpl, rng, 5)
    for l, p in zip(sizes, poses):
        m = pose_spheres(tmpl, l, p)
        for f in range(5):
            chain = m.centers[18 + 6 * f: 18 + 6 * f + 6]
            for pair in ((0, 1), (2, 3), (4, 5)):  # spheres within one phalanx
                seg = chain[pair[1]] - chain[pair[0]]
                assert np.linalg.norm(seg) > 1.0


def test_clamp_params(tmpl):
    l = np.array([0.5, 1.0, 1.2, 0.9, 1.1, 0.8])
    p = neutral_pose(tmpl, (0, 0, 400))
    lc, pc = clamp_params(tmpl, l, p)
    assert np.allclose(lc, l) and np.allclose(pc, p)

    l_bad = l.copy()
    l_bad[0] = 9.0
    lc, _ = clamp_params(tmpl, l_bad, p)
    assert lc[0] == pytest.approx(1.6)

    rng = np.random.default_rng(6)
    for _ in range(20):
        lr = rng.uniform(-2, 4, 6)
        pr = rng.uniform(-10, 10, 26)
        l1, p1 = clamp_params(tmpl, lr, pr)
        l2, p2 = clamp_params(tmpl, l1, p1)
        assert np.array_equal(l1, l2) and np.array_equal(p1, p2)


def test_continuity_lipschitz_bound(tmpl):
    # Finite perturbations: center displacement is bounded by K * |dp|_1 with
    # K from the template's longest lever arm (~240 mm at max scale).
    K = 400.0
    rng = np.random.default_rng(7)
    sizes, poses = random_params(tmpl, rng, 10)
    for l, p in zip(sizes, poses):
        base, _ = pose_spheres_batch(tmpl, l[None], p[None])
        for _ in range(5):
            dp = rng.normal(0, 1e-3, 26)
            moved, _ = pose_spheres_batch(tmpl, l[None], (p + dp)[None])
            disp = np.linalg.norm(moved - base, axis=2).max()
            assert disp <= K * np.abs(dp).sum() + 1e-9


def test_fk_kernel_matches_reference(tmpl):
    rng = np.random.default_rng(8)
    sizes, poses = random_params(tmpl, rng, 128)
    ref_c, ref_r = pose_spheres_batch(tmpl, sizes, poses)
    c32, r32 = fk_batch32(sizes.astype(np.float32), poses.astype(np.float32),
                          *handmodel.kernel_pack(tmpl))
    assert np.abs(ref_c - c32).max() < 5e-3
    assert np.abs(ref_r - r32).max() < 1e-5


def test_palm_orientation_of_pose_pure_z():
    for theta in (-2.0, -0.5, 0.0, 0.7, 2.5):
        p = np.zeros(26)
        p[5] = theta
        assert palm_orientation_of_pose(p) == pytest.approx(theta, abs=1e-12)


def test_junction_positions_rotate_about_palm_center(tmpl):
    center = np.array([15.0, -20.0, 480.0])
    q0 = junction_positions(tmpl, 1.0, 0.0, center)
    q90 = junction_positions(tmpl, 1.0, np.pi / 2, center)
    rel0 = q0 - center
    rel90 = q90 - center
    assert np.allclose(rel90[:, 0], -rel0[:, 1], atol=1e-12)
    assert np.allclose(rel90[:, 1], rel0[:, 0], atol=1e-12)
    assert np.allclose(np.linalg.norm(rel0, axis=1), np.linalg.norm(rel90, axis=1))


def test_wrist_and_joints(tmpl):
    joints = joint_positions(tmpl, np.ones(6), np.zeros(26))
    assert joints.shape == (6, 3)
    assert np.allclose(joints[0], tmpl.wrist_local, atol=1e-12)
