"""Pose/camera primitive tests: normalization, projection, the abs split."""

import numpy as np
import pytest

from poselift.errors import ValidationError
from poselift.geometry import (
    NORMALIZED_UNITS,
    PIXEL_UNITS,
    CameraIntrinsics,
    PersonTrack,
    Pose2D,
    Pose3D,
    Sequence,
    Skeleton,
    compose_absolute,
    default_skeleton,
    normalize_keypoints,
    project,
    split_absolute,
)

CAM = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=500.0, cy=400.0)


def _pose(coords, conf=None, detected=True, units=PIXEL_UNITS):
    coords = np.asarray(coords, dtype=np.float64)
    if conf is None:
        conf = np.ones(coords.shape[0])
    return Pose2D(coords, conf, detected, units)


class TestNormalizeKeypoints:
    def test_principal_point_maps_to_origin(self):
        out = normalize_keypoints(_pose([[500.0, 400.0]]), CAM)
        assert out.coords[0, 0] == 0.0
        assert out.coords[0, 1] == 0.0
        assert out.units == NORMALIZED_UNITS

    def test_one_focal_length_along_x(self):
        out = normalize_keypoints(_pose([[1500.0, 400.0]]), CAM)
        assert out.coords[0, 0] == 1.0
        assert out.coords[0, 1] == 0.0

    def test_hand_case(self):
        # (750-500)/1000 = 0.25, (900-400)/1000 = 0.5
        out = normalize_keypoints(_pose([[750.0, 900.0]]), CAM)
        np.testing.assert_allclose(out.coords[0], [0.25, 0.5], rtol=0, atol=0)

    def test_confidence_and_flag_pass_through(self):
        pose = _pose([[0.0, 0.0], [10.0, 10.0]], conf=[0.3, 0.9])
        out = normalize_keypoints(pose, CAM)
        np.testing.assert_array_equal(out.confidence, [0.3, 0.9])
        assert out.detected is True

    def test_double_normalization_rejected(self):
        pose = _pose([[0.1, 0.2]], units=NORMALIZED_UNITS)
        with pytest.raises(ValidationError):
            normalize_keypoints(pose, CAM)

    def test_identity_camera_idempotent_values(self):
        # fx=fy=1, cx=cy=0 leaves coordinates unchanged
        ident = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
        pose = _pose([[0.37, -0.81]])
        out = normalize_keypoints(pose, ident)
        np.testing.assert_array_equal(out.coords, pose.coords)


class TestProject:
    def test_optical_axis_hits_principal_point(self):
        for z in (1.0, 123.0, 9999.0):
            out = project(np.array([[0.0, 0.0, z]]), CAM)
            assert tuple(out.coords[0]) == (500.0, 400.0)

    def test_hand_case(self):
        cam = CameraIntrinsics(1000.0, 1000.0, 0.0, 0.0)
        out = project(np.array([[1000.0, 0.0, 2000.0]]), cam)
        np.testing.assert_allclose(out.coords[0], [500.0, 0.0], rtol=0, atol=0)

    def test_confidences_set_to_one(self):
        out = project(np.array([[0.0, 0.0, 100.0], [5.0, 5.0, 50.0]]), CAM)
        np.testing.assert_array_equal(out.confidence, [1.0, 1.0])
        assert out.units == PIXEL_UNITS

    def test_non_positive_depth_rejected(self):
        with pytest.raises(ValidationError):
            project(np.array([[0.0, 0.0, 0.0]]), CAM)
        with pytest.raises(ValidationError):
            project(np.array([[0.0, 0.0, -5.0]]), CAM)

    def test_roundtrip_equals_pinhole_ratio(self):
        rng = np.random.default_rng(4)
        pts = np.stack([
            rng.uniform(-2000, 2000, size=50),
            rng.uniform(-2000, 2000, size=50),
            rng.uniform(1000, 10000, size=50),
        ], axis=1)
        out = normalize_keypoints(project(pts, CAM), CAM)
        expect = pts[:, :2] / pts[:, 2:3]
        np.testing.assert_allclose(out.coords, expect, rtol=1e-12)


class TestSplitCompose:
    def test_zero_location_identity(self):
        rel = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(compose_absolute(np.zeros(3), rel), rel)

    def test_root_lands_at_location(self):
        rel = np.array([[0.5, 0.0, -1.0], [0.0, 0.0, 0.0]])
        out = compose_absolute(np.array([1.0, 2.0, 3.0]), rel)
        np.testing.assert_array_equal(out[1], [1.0, 2.0, 3.0])

    def test_split_constant_pose(self):
        abs_joints = np.full((5, 3), 5.0)
        loc, rel = split_absolute(abs_joints, 2)
        np.testing.assert_array_equal(loc, [5.0, 5.0, 5.0])
        np.testing.assert_array_equal(rel, np.zeros((5, 3)))

    def test_split_two_joints(self):
        loc, rel = split_absolute(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), 0)
        np.testing.assert_array_equal(rel, [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])

    def test_root_index_out_of_range(self):
        with pytest.raises(ValidationError):
            split_absolute(np.zeros((3, 3)), 3)

    def test_roundtrip_bitwise_on_dyadic_values(self):
        # Dyadic rationals add and subtract exactly in binary floating point,
        # so the roundtrip must be bit-for-bit here.
        rng = np.random.default_rng(11)
        abs_joints = rng.integers(-4096, 4096, size=(17, 3)).astype(np.float64) / 8.0
        for root in (0, 7, 16):
            loc, rel = split_absolute(abs_joints, root)
            assert rel[root].tobytes() == np.zeros(3).tobytes()
            back = compose_absolute(loc, rel)
            assert back.tobytes() == abs_joints.tobytes()

    def test_roundtrip_relative_tolerance_random(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            abs_joints = rng.normal(scale=1500.0, size=(17, 3))
            loc, rel = split_absolute(abs_joints, 14)
            np.testing.assert_allclose(compose_absolute(loc, rel), abs_joints,
                                       rtol=1e-12, atol=1e-9)
            np.testing.assert_array_equal(rel[14], np.zeros(3))


class TestValidation:
    def test_skeleton_rejects_bad_root(self):
        with pytest.raises(ValidationError):
            Skeleton(("a", "b"), 2, ())

    def test_skeleton_rejects_dangling_edge(self):
        with pytest.raises(ValidationError):
            Skeleton(("a", "b"), 0, ((0, 5),))

    def test_default_skeleton_shape(self):
        sk = default_skeleton()
        assert sk.num_joints == 17
        assert sk.root_index == 14
        assert len(sk.edges) == 16
        # every non-root joint is some edge's child exactly once (a tree)
        children = sorted(b for _, b in sk.edges)
        assert children == sorted(set(range(17)) - {14})

    def test_camera_rejects_bad_focal(self):
        with pytest.raises(ValidationError):
            CameraIntrinsics(0.0, 1.0, 0.0, 0.0)

    def test_pose2d_confidence_range(self):
        with pytest.raises(ValidationError):
            _pose([[0.0, 0.0]], conf=[1.5])

    def test_undetected_needs_zero_confidence(self):
        with pytest.raises(ValidationError):
            Pose2D(np.zeros((1, 2)), np.array([0.5]), detected=False)

    def test_pose3d_shapes(self):
        with pytest.raises(ValidationError):
            Pose3D(np.zeros(2), np.zeros((3, 3)))
        with pytest.raises(ValidationError):
            Pose3D(np.zeros(3), np.zeros((3, 2)))

    def test_track_length_mismatch(self):
        with pytest.raises(ValidationError):
            PersonTrack("p0", [None], [])

    def test_sequence_checks_track_length_and_root_row(self):
        sk = default_skeleton()
        cam = CAM
        good = Pose3D(np.array([0.0, 0.0, 3000.0]), np.zeros((17, 3)))
        track = PersonTrack("p0", [None, None], [good, good])
        Sequence("s", 2, 30.0, cam, sk, [track])  # fine
        with pytest.raises(ValidationError):
            Sequence("s", 3, 30.0, cam, sk, [track])
        bad_rel = np.zeros((17, 3))
        bad_rel[14, 0] = 1.0
        bad = Pose3D(np.array([0.0, 0.0, 3000.0]), bad_rel)
        with pytest.raises(ValidationError):
            Sequence("s", 1, 30.0, cam, sk, [PersonTrack("p0", [None], [bad])])
