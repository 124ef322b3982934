"""Pose, camera and skeleton primitives.

Conventions used throughout the package:
  * camera coordinates are millimeters, x right, y down, z forward (depth > 0
    in front of the camera); the origin is the camera center
  * image coordinates are pixels, origin at the top-left corner
  * "normalized" keypoints are ray tangents: pixels mapped through the inverse
    intrinsics, (u - cx) / fx and (v - cy) / fy
  * a relative pose is expressed as offsets from the root joint (the hip),
    whose own row is identically zero
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

PIXEL_UNITS = "pixels"
NORMALIZED_UNITS = "normalized"


@dataclass(frozen=True)
class Skeleton:
    """Joint layout shared by ground truth, predictions, synthesis and plots."""

    joint_names: tuple
    root_index: int
    edges: tuple  # (parent, child) joint-index pairs

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        if self.num_joints < 2:
            raise ValidationError("skeleton needs at least 2 joints")
        if not 0 <= self.root_index < self.num_joints:
            raise ValidationError("root_index out of range")
        for a, b in self.edges:
            if not (0 <= a < self.num_joints and 0 <= b < self.num_joints):
                raise ValidationError(f"edge ({a},{b}) references a missing joint")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)


# 17-joint layout with a hip root, the usual multi-person evaluation set.
JOINT_NAMES_17 = (
    "head_top", "neck",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_hip", "right_knee", "right_ankle",
    "left_hip", "left_knee", "left_ankle",
    "hip", "spine", "head",
)

# A tree rooted at the hip (joint 14); 16 edges for 17 joints.
EDGES_17 = (
    (14, 15), (15, 1), (1, 16), (16, 0),
    (1, 2), (2, 3), (3, 4),
    (1, 5), (5, 6), (6, 7),
    (14, 8), (8, 9), (9, 10),
    (14, 11), (11, 12), (12, 13),
)


def default_skeleton() -> Skeleton:
    return Skeleton(JOINT_NAMES_17, 14, EDGES_17)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive")


@dataclass
class Pose2D:
    """One person's 2D joints for a single frame.

    coords is (J, 2); the units tag guards against double normalization.
    """

    coords: np.ndarray
    confidence: np.ndarray
    detected: bool = True
    units: str = PIXEL_UNITS

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValidationError("coords must have shape (J, 2)")
        if self.confidence.shape != (self.coords.shape[0],):
            raise ValidationError("confidence must have shape (J,)")
        if np.any(self.confidence < 0.0) or np.any(self.confidence > 1.0):
            raise ValidationError("confidences must lie in [0, 1]")
        if not self.detected and np.any(self.confidence != 0.0):
            raise ValidationError("an undetected pose must carry zero confidences")
        if self.units not in (PIXEL_UNITS, NORMALIZED_UNITS):
            raise ValidationError(f"unknown units tag {self.units!r}")

    @property
    def num_joints(self) -> int:
        return self.coords.shape[0]


@dataclass
class Pose3D:
    """Absolute root location plus root-relative joint offsets, both in mm."""

    location: np.ndarray  # (3,)
    relative: np.ndarray  # (J, 3); root row identically zero

    def __post_init__(self):
        self.location = np.asarray(self.location, dtype=np.float64)
        self.relative = np.asarray(self.relative, dtype=np.float64)
        if self.location.shape != (3,):
            raise ValidationError("location must have shape (3,)")
        if self.relative.ndim != 2 or self.relative.shape[1] != 3:
            raise ValidationError("relative must have shape (J, 3)")

    @property
    def num_joints(self) -> int:
        return self.relative.shape[0]


@dataclass
class PersonTrack:
    """Per-frame detections and optional ground truth for one person.

    detections[t] is None when the person is fully invisible at frame t.
    """

    person_id: str
    detections: list  # list[Pose2D | None]
    gt: list  # list[Pose3D | None]

    def __post_init__(self):
        if len(self.detections) != len(self.gt):
            raise ValidationError("detections and gt must have equal length")

    def __len__(self) -> int:
        return len(self.detections)


@dataclass
class Sequence:
    seq_id: str
    num_frames: int
    fps: float
    camera: CameraIntrinsics
    skeleton: Skeleton
    tracks: list  # list[PersonTrack]

    def __post_init__(self):
        if self.num_frames < 1:
            raise ValidationError("a sequence needs at least one frame")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        root = self.skeleton.root_index
        for track in self.tracks:
            if len(track) != self.num_frames:
                raise ValidationError(
                    f"track {track.person_id} has {len(track)} frames, expected {self.num_frames}"
                )
            for pose in track.gt:
                if pose is None:
                    continue
                if pose.num_joints != self.skeleton.num_joints:
                    raise ValidationError("ground-truth joint count does not match skeleton")
                if np.any(pose.relative[root] != 0.0):
                    raise ValidationError("relative pose must be zero at the root joint")
                if pose.location[2] <= 0.0:
                    raise ValidationError("ground-truth depth must be positive")


def normalize_keypoints(pose: Pose2D, cam: CameraIntrinsics) -> Pose2D:
    """Map pixel keypoints through the inverse intrinsics.

    Confidences and the detected flag pass through unchanged.
    """
    if pose.units != PIXEL_UNITS:
        raise ValidationError("keypoints are already normalized")
    coords = np.empty_like(pose.coords)
    coords[:, 0] = (pose.coords[:, 0] - cam.cx) / cam.fx
    coords[:, 1] = (pose.coords[:, 1] - cam.cy) / cam.fy
    return Pose2D(coords, pose.confidence.copy(), pose.detected, NORMALIZED_UNITS)


def project(abs_joints: np.ndarray, cam: CameraIntrinsics) -> Pose2D:
    """Pinhole-project absolute 3D joints (mm) to pixel coordinates."""
    abs_joints = np.asarray(abs_joints, dtype=np.float64)
    if abs_joints.ndim != 2 or abs_joints.shape[1] != 3:
        raise ValidationError("abs_joints must have shape (J, 3)")
    z = abs_joints[:, 2]
    if np.any(z <= 0.0):
        raise ValidationError("cannot project joints at non-positive depth")
    coords = np.empty((abs_joints.shape[0], 2))
    coords[:, 0] = cam.fx * abs_joints[:, 0] / z + cam.cx
    coords[:, 1] = cam.fy * abs_joints[:, 1] / z + cam.cy
    return Pose2D(coords, np.ones(abs_joints.shape[0]), True, PIXEL_UNITS)


def compose_absolute(location: np.ndarray, relative: np.ndarray) -> np.ndarray:
    """abs_j = location + relative_j; the relative root row must be zero."""
    location = np.asarray(location, dtype=np.float64)
    relative = np.asarray(relative, dtype=np.float64)
    return location[None, :] + relative


def split_absolute(abs_joints: np.ndarray, root_index: int):
    """Decompose absolute joints into (root location, root-relative offsets)."""
    abs_joints = np.asarray(abs_joints, dtype=np.float64)
    if not 0 <= root_index < abs_joints.shape[0]:
        raise ValidationError("root_index out of range")
    location = abs_joints[root_index].copy()
    relative = abs_joints - location[None, :]
    return location, relative
