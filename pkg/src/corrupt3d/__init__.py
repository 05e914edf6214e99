"""Corruption synthesis and robustness metrics for 3D object detection data."""

from .severities import (ALL_CORRUPTIONS, DEFAULT_CONSTANTS, KITTI_CORRUPTIONS,
                         Corruption, PhysicsConstants)
from .types import (Box3D, Calibration, CorruptionSpec, Difficulty,
                    FrameBundle, ObjectClass, PointCloud, Pose)

__all__ = [
    "ALL_CORRUPTIONS",
    "Box3D",
    "Calibration",
    "Corruption",
    "CorruptionSpec",
    "DEFAULT_CONSTANTS",
    "Difficulty",
    "FrameBundle",
    "KITTI_CORRUPTIONS",
    "ObjectClass",
    "PhysicsConstants",
    "PointCloud",
    "Pose",
]

__version__ = "0.1.0"
