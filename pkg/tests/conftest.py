import numpy as np
import pytest

import handtrack as ht
from handtrack import handmodel, renderer, segmentation
from handtrack.segmentation import HandMask


@pytest.fixture(scope="session")
def tmpl():
    return ht.load_template()


@pytest.fixture(scope="session")
def cam():
    return ht.DEFAULT_INTRINSICS


@pytest.fixture(scope="session")
def open_hand(tmpl, cam):
    """Clean render of the canonical open hand at 460 mm."""
    pose = handmodel.neutral_pose(tmpl, (0.0, 10.0, 460.0))
    return renderer.render_pose(tmpl, np.ones(6), pose, cam, 320, 240)


@pytest.fixture(scope="session")
def open_hand_mask(open_hand):
    return segmentation.segment_hand(open_hand.frame)


def coverage_mask(frame):
    """HandMask over every rendered pixel (bypasses flood-fill policy)."""
    member = frame.depth > 0
    vs, us = np.nonzero(member)
    order = int(np.argmin(frame.depth[member]))
    return HandMask(width=frame.width, height=frame.height, member=member,
                    closest_pixel=(int(us[order]), int(vs[order])),
                    pixel_count=int(member.sum()))
