"""Temporal convolutional 2D-to-3D lifting network and its trainer."""

from .model import LifterConfig, NormStats, PoseLifter
from .train import TrainConfig, predict_track, train_lifter

__all__ = [
    "LifterConfig",
    "NormStats",
    "PoseLifter",
    "TrainConfig",
    "predict_track",
    "train_lifter",
]
