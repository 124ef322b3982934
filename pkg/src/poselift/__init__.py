"""Absolute 3D human pose from 2D keypoint tracks.

Two-stage pipeline: a temporal convolutional lifter turns windowed 2D
keypoints into camera-space location plus root-relative pose, then an
energy-based refinement smooths the trajectories through occlusion gaps
using per-frame visibility. Ships with a synthetic multi-person benchmark
generator, interpolation/1-Euro baselines, and the usual metrics.
"""

from .errors import ValidationError
from .geometry import (
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
from .lifter.model import LifterConfig, NormStats, PoseLifter
from .lifter.train import TrainConfig, predict_track, train_lifter
from .refinement import RefineConfig, RefineResult, refine_track, visibility_scores
from .synth import SynthConfig, generate_sequence, sequence_seed

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "LifterConfig",
    "NormStats",
    "PersonTrack",
    "Pose2D",
    "Pose3D",
    "PoseLifter",
    "RefineConfig",
    "RefineResult",
    "Sequence",
    "Skeleton",
    "SynthConfig",
    "TrainConfig",
    "ValidationError",
    "compose_absolute",
    "default_skeleton",
    "generate_sequence",
    "normalize_keypoints",
    "predict_track",
    "project",
    "refine_track",
    "sequence_seed",
    "split_absolute",
    "train_lifter",
    "visibility_scores",
]
