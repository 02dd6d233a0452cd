import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semgraph.errors import FrameMisuseError, InputShapeError
from semgraph.geometry import (
    CAMERA,
    MAP,
    CameraIntrinsics,
    DepthImage,
    PointCloud,
    Pose,
    back_project,
    matrix_to_quaternion,
    project_point,
    read_depth_png,
    transform_cloud,
    write_depth_png,
)

from oracles import rotate_by_quaternion

K = CameraIntrinsics(fx=500, fy=500, cx=320, cy=240, width=640, height=480, depth_scale=0.001)
YAW90 = (math.sqrt(2) / 2, 0.0, 0.0, math.sqrt(2) / 2)


def single_pixel(u, v, raw, k=K):
    img = np.zeros((k.height, k.width), dtype=np.uint16)
    img[v, u] = raw
    return DepthImage.from_array(img)


def test_principal_point_ray(accel):
    cloud = back_project(single_pixel(320, 240, 2000), K)
    assert cloud.frame == CAMERA
    np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 2.0]])


def test_off_axis_pixel(accel):
    # X = (820 - 320) * 2.0 / 500 = 2.0
    k = CameraIntrinsics(fx=500, fy=500, cx=320, cy=240, width=1000, height=480)
    cloud = back_project(single_pixel(820, 240, 2000, k), k)
    np.testing.assert_allclose(cloud.points, [[2.0, 0.0, 2.0]])


def test_zero_depth_emits_nothing(accel):
    assert len(back_project(DepthImage.from_array(np.zeros((480, 640), np.uint16)), K)) == 0


def test_dimension_mismatch():
    with pytest.raises(InputShapeError):
        back_project(DepthImage.from_array(np.zeros((10, 10), np.uint16)), K)
    with pytest.raises(InputShapeError):
        DepthImage(width=4, height=4, raw=np.zeros(15))


def test_row_major_order_and_stride(accel):
    img = np.zeros((480, 640), np.uint16)
    img[0, 2] = 1000
    img[2, 0] = 1000
    img[1, 1] = 1000  # skipped by stride 2
    cloud = back_project(DepthImage.from_array(img), K, stride=2)
    assert len(cloud) == 2
    assert cloud.points[0, 1] < cloud.points[1, 1]  # row 0 before row 2


def test_max_range_cutoff(accel):
    img = np.zeros((480, 640), np.uint16)
    img[10, 10] = 5000
    img[20, 20] = 7000
    cloud = back_project(DepthImage.from_array(img), K, max_range=6.0)
    np.testing.assert_allclose(cloud.points[:, 2], [5.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_output_size_counts_valid_sampled_pixels(stride, seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 3, size=(48, 64)).astype(np.uint16) * 1000
    k = CameraIntrinsics(fx=60, fy=60, cx=32, cy=24, width=64, height=48)
    cloud = back_project(DepthImage.from_array(img), k, stride=stride)
    assert len(cloud) == int(np.count_nonzero(img[::stride, ::stride]))


def test_identity_transform():
    cloud = PointCloud([[1, 2, 3], [-4, 5, 0.5]], CAMERA)
    out = transform_cloud(cloud, Pose.identity())
    assert out.frame == MAP
    np.testing.assert_array_equal(out.points, cloud.points)


def test_pure_translation():
    out = transform_cloud(PointCloud([[1, 2, 3]]), Pose((0, 0, 5)))
    np.testing.assert_allclose(out.points, [[1, 2, 8]])


def test_yaw_rotation_matches_quaternion_oracle():
    expected = np.add(rotate_by_quaternion(YAW90, (1.0, 0.0, 0.0)), (1.0, 0.0, 0.0))
    np.testing.assert_allclose(expected, [1.0, 1.0, 0.0], atol=1e-12)
    out = transform_cloud(PointCloud([[1, 0, 0]]), Pose((1, 0, 0), YAW90))
    np.testing.assert_allclose(out.points[0], expected, atol=1e-12)


def test_map_frame_cloud_rejected():
    with pytest.raises(FrameMisuseError):
        transform_cloud(PointCloud([[0, 0, 1]], MAP), Pose.identity())


def test_pose_normalizes_quaternion():
    p = Pose((0, 0, 0), (2, 0, 0, 0))
    assert abs(math.sqrt(sum(c * c for c in p.rotation)) - 1) < 1e-9


def test_matrix_quaternion_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(50):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        p = Pose((0, 0, 0), tuple(q))
        q2 = matrix_to_quaternion(p.rotation_matrix)
        np.testing.assert_allclose(Pose((0, 0, 0), q2).rotation_matrix, p.rotation_matrix, atol=1e-12)


def test_project_principal_point():
    assert project_point((0, 0, 2), Pose.identity(), K) == (0.5, 0.5)


def test_project_behind_camera():
    assert project_point((0, 0, -1), Pose.identity(), K) is None


def test_project_outside_image():
    assert project_point((10, 0, 1), Pose.identity(), K) is None


def test_round_trip_single_pixel():
    pose = Pose((0.3, -1.0, 0.8), (0.9, 0.1, -0.3, 0.2))
    cloud = transform_cloud(back_project(single_pixel(101, 377, 3456), K), pose)
    u, v = project_point(cloud.points[0], pose, K)
    assert abs(u * K.width - 101) < 0.5 and abs(v * K.height - 377) < 0.5


quaternions = st.tuples(*[st.floats(-1, 1) for _ in range(4)]).filter(lambda q: sum(c * c for c in q) > 1e-3)
vectors = st.tuples(*[st.floats(-10, 10) for _ in range(3)])


@settings(max_examples=100, deadline=None)
@given(quaternions, vectors, st.integers(0, 639), st.integers(0, 479), st.integers(1, 65535))
def test_round_trip_property(q, t, u, v, raw):
    pose = Pose(t, q)
    cloud = transform_cloud(back_project(single_pixel(u, v, raw), K), pose)
    pix = project_point(cloud.points[0], pose, K)
    assert pix is not None
    assert abs(pix[0] * K.width - u) < 0.5 and abs(pix[1] * K.height - v) < 0.5


@settings(max_examples=50, deadline=None)
@given(quaternions, vectors, st.integers(0, 2**32 - 1))
def test_rigidity_property(q, t, seed):
    pts = np.random.default_rng(seed).uniform(-5, 5, size=(20, 3))
    out = transform_cloud(PointCloud(pts), Pose(t, q)).points
    before = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    after = np.linalg.norm(out[:, None] - out[None], axis=-1)
    mask = before > 0
    assert np.all(np.abs(after[mask] - before[mask]) / before[mask] <= 1e-9)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=0, fy=1, cx=1, cy=1, width=4, height=4)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=1, fy=1, cx=4, cy=1, width=4, height=4)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=1, fy=1, cx=1, cy=1, width=4, height=4, depth_scale=0)


def test_non_finite_points_rejected():
    with pytest.raises(ValueError):
        PointCloud([[0, np.nan, 1]])


def test_depth_png_round_trip(tmp_path):
    raw = np.random.default_rng(0).integers(0, 65535, size=(12, 17)).astype(np.uint16)
    write_depth_png(DepthImage.from_array(raw), tmp_path / "d.png")
    back = read_depth_png(tmp_path / "d.png")
    np.testing.assert_array_equal(back.raw, raw)
