import numpy as np
import pytest

from handtrack import handmodel, renderer
from handtrack.depthio import (CameraIntrinsics, DepthFrame, GroundTruthLabel,
                               camera_to_pixel, load_labels, load_sequence,
                               pixel_to_camera, save_labels, save_sequence)
from handtrack.errors import FormatError

K = CameraIntrinsics(fx=224.5, fy=224.5, cx=159.5, cy=119.5)


def test_principal_point_ray_is_optical_axis():
    assert np.allclose(pixel_to_camera(K.cx, K.cy, 500, K), [0.0, 0.0, 500.0])


def test_projection_round_trip():
    rng = np.random.default_rng(0)
    u = rng.uniform(0, 319, 200)
    v = rng.uniform(0, 239, 200)
    d = rng.uniform(1, 2000, 200)
    uvz = camera_to_pixel(pixel_to_camera(u, v, d, K), K)
    assert np.allclose(uvz[:, 0], u, atol=1e-9)
    assert np.allclose(uvz[:, 1], v, atol=1e-9)
    assert np.allclose(uvz[:, 2], d, atol=1e-9)


def test_one_focal_length_off_axis():
    # (u = cx + fx, v = cy, d = 400): x = (cx + fx - cx) * 400 / fx = 400.
    assert np.allclose(pixel_to_camera(K.cx + K.fx, K.cy, 400, K), [400.0, 0.0, 400.0])


def test_camera_to_pixel_against_direct_formula():
    p = np.array([100.0, -50.0, 250.0])
    expect_u = K.fx * 100.0 / 250.0 + K.cx
    expect_v = K.fy * -50.0 / 250.0 + K.cy
    assert np.allclose(camera_to_pixel(p, K), [expect_u, expect_v, 250.0])
    assert np.allclose(camera_to_pixel([0, 0, 500], K), [K.cx, K.cy, 500.0])


def test_projection_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        pixel_to_camera(10, 10, 0, K)
    with pytest.raises(ValueError):
        camera_to_pixel([0.0, 0.0, -5.0], K)
    with pytest.raises(ValueError):
        camera_to_pixel([0.0, 0.0, 0.0], K)


def test_constant_depth_frame_backprojects_coplanar():
    frame = DepthFrame(width=16, height=12, depth=np.full((12, 16), 700, np.uint16))
    us, vs = np.meshgrid(np.arange(16), np.arange(12))
    pts = pixel_to_camera(us.ravel(), vs.ravel(), frame.depth.ravel(), K)
    assert np.allclose(pts[:, 2], 700.0)


def test_depth_frame_validates_shape():
    with pytest.raises(ValueError):
        DepthFrame(width=4, height=4, depth=np.zeros((3, 4), np.uint16))


def test_sequence_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    frames = [DepthFrame(32, 24, rng.integers(0, 3000, (24, 32)).astype(np.uint16), i)
              for i in range(5)]
    path = tmp_path / "seq.htds"
    save_sequence(path, frames, K)
    seq = load_sequence(path)
    assert len(seq) == 5
    assert seq.intrinsics.fx == pytest.approx(K.fx)
    for orig, back in zip(frames, seq.frames):
        assert np.array_equal(orig.depth, back.depth)
    assert [f.frame_index for f in seq.frames] == list(range(5))


def test_label_round_trip_and_empty_file(tmp_path):
    labels = [GroundTruthLabel(i, np.array([1.0, 2.0, 3.0]) * i,
                               np.arange(15, dtype=float).reshape(5, 3) + i)
              for i in (0, 2, 5)]
    path = tmp_path / "labels.csv"
    save_labels(path, labels)
    back = load_labels(path)
    assert sorted(back) == [0, 2, 5]
    for lab in labels:
        assert np.allclose(back[lab.frame_index].joints(), lab.joints())

    empty = tmp_path / "empty.csv"
    save_labels(empty, [])
    assert load_labels(empty) == {}


def test_sequence_loads_sibling_labels(tmp_path):
    frames = [DepthFrame(8, 8, np.full((8, 8), 400, np.uint16), 0)]
    path = tmp_path / "seq.htds"
    save_sequence(path, frames, K)
    save_labels(tmp_path / "seq.labels.csv",
                [GroundTruthLabel(0, np.zeros(3), np.zeros((5, 3)))])
    seq = load_sequence(path)
    assert 0 in seq.labels


@pytest.mark.parametrize("corrupt,fragment", [
    ("magic", "bad magic"),
    ("truncate", "truncated payload"),
    ("dims", "dimension mismatch"),
])
def test_distinct_format_diagnostics(tmp_path, corrupt, fragment):
    frames = [DepthFrame(8, 6, np.full((6, 8), 300, np.uint16), 0)]
    path = tmp_path / "seq.htds"
    save_sequence(path, frames, K)
    raw = bytearray(path.read_bytes())
    if corrupt == "magic":
        raw[:4] = b"XXXX"
    elif corrupt == "truncate":
        raw = raw[:-7]
    elif corrupt == "dims":
        # Shrink the header's width: payload no longer matches the dims.
        import struct
        raw[8:12] = struct.pack("<I", 7)
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match=fragment):
        load_sequence(path)


def test_synthetic_sequence_round_trip(tmp_path, tmpl):
    # Renderer-generated multi-frame file: monotone indices, depths intact.
    cam = CameraIntrinsics(fx=70.0, fy=70.0, cx=31.5, cy=23.5)
    traj = [(np.ones(6), handmodel.neutral_pose(tmpl, (0, 0, 420 + i))) for i in range(20)]
    renderer.synthesize_sequence(tmp_path / "s.htds", tmpl, traj, cam, 64, 48,
                                 renderer.NoiseSpec(), np.random.default_rng(0))
    seq = load_sequence(tmp_path / "s.htds")
    assert [f.frame_index for f in seq.frames] == list(range(20))
    assert len(seq.labels) == 20
    assert all(f.depth.max() > 0 for f in seq.frames)
