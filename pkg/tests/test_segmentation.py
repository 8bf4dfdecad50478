import numpy as np
import pytest

from handtrack._kernels import geodesic_hops
from handtrack.depthio import DepthFrame
from handtrack.errors import EmptyFrameError
from handtrack.segmentation import closest_valid_pixel, segment_hand


def frame_from(depth):
    depth = np.asarray(depth, dtype=np.uint16)
    return DepthFrame(width=depth.shape[1], height=depth.shape[0], depth=depth)


def test_closest_pixel_single_nonzero():
    depth = np.zeros((30, 30), np.uint16)
    depth[20, 10] = 300
    assert closest_valid_pixel(frame_from(depth)) == (10, 20)


def test_closest_pixel_row_major_tie_break():
    depth = np.full((10, 10), 400, np.uint16)
    assert closest_valid_pixel(frame_from(depth)) == (0, 0)


def test_all_void_frame_raises():
    with pytest.raises(EmptyFrameError):
        closest_valid_pixel(frame_from(np.zeros((5, 5), np.uint16)))
    with pytest.raises(EmptyFrameError):
        segment_hand(frame_from(np.zeros((5, 5), np.uint16)))


def test_square_surrounded_by_voids():
    depth = np.zeros((40, 40), np.uint16)
    depth[10:30, 5:25] = 500
    mask = segment_hand(frame_from(depth))
    expect = depth > 0
    assert np.array_equal(mask.member, expect)
    assert mask.pixel_count == 400
    assert not mask.truncated


def test_voids_are_hard_boundaries_between_blobs():
    depth = np.zeros((40, 60), np.uint16)
    depth[10:20, 5:15] = 300     # nearer blob
    depth[10:20, 30:40] = 320    # farther blob, void gap between
    mask = segment_hand(frame_from(depth))
    assert mask.member[:, :15].sum() == 100
    assert mask.member[:, 30:].sum() == 0


def test_depth_step_blocks_growth():
    depth = np.full((20, 20), 400, np.uint16)
    depth[:, 10:] = 500  # 100 mm cliff splits the frame
    mask = segment_hand(frame_from(depth), delta_depth=20)
    assert mask.member[:, :10].all()
    assert not mask.member[:, 10:].any()


def test_gradual_ramp_is_followed():
    # 5 mm per column is within the default 20 mm neighbor tolerance.
    depth = (400 + 5 * np.arange(30))[None, :].repeat(20, axis=0).astype(np.uint16)
    mask = segment_hand(frame_from(depth))
    assert mask.member.all()


def test_background_invariance(open_hand):
    near = segment_hand(open_hand.frame)
    with_wall = open_hand.frame.depth.copy()
    wall = with_wall == 0
    hand_far = with_wall[with_wall > 0].max()
    with_wall[wall] = hand_far + 250
    far_mask = segment_hand(frame_from(with_wall))
    assert np.array_equal(near.member, far_mask.member)


def test_global_depth_offset_invariance(open_hand):
    base = segment_hand(open_hand.frame)
    shifted = open_hand.frame.depth.copy()
    shifted[shifted > 0] += 500
    mask = segment_hand(frame_from(shifted))
    assert np.array_equal(base.member, mask.member)
    assert mask.closest_pixel == base.closest_pixel


def test_mask_matches_render_coverage(open_hand):
    mask = segment_hand(open_hand.frame)
    coverage = open_hand.frame.depth > 0
    assert np.array_equal(mask.member, coverage)


def test_every_member_reachable_from_seed(open_hand):
    mask = segment_hand(open_hand.frame)
    hops = geodesic_hops(mask.member, np.int32(mask.closest_pixel[0]),
                         np.int32(mask.closest_pixel[1]))
    assert (hops[mask.member] >= 0).all()


def test_closest_pixel_is_member_with_minimal_depth(open_hand):
    mask = segment_hand(open_hand.frame)
    u, v = mask.closest_pixel
    assert mask.member[v, u]
    depths = open_hand.frame.depth[mask.member]
    assert open_hand.frame.depth[v, u] == depths.min()


def test_truncation_flag_and_cap():
    depth = np.full((50, 50), 600, np.uint16)
    mask = segment_hand(frame_from(depth), max_pixels=100)
    assert mask.truncated
    assert mask.pixel_count == 100
    assert mask.member.sum() == 100


def test_truncation_deterministic():
    depth = np.full((50, 50), 600, np.uint16)
    a = segment_hand(frame_from(depth), max_pixels=137)
    b = segment_hand(frame_from(depth), max_pixels=137)
    assert np.array_equal(a.member, b.member)
