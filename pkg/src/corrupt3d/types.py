"""Shared domain types: point clouds, boxes, poses, calibration, frames.

Coordinate convention: LiDAR frame with x forward, y left, z up. All angles
are stored in radians; degree-based severity tables are converted at the
boundary. Box yaw is about +z and normalized to (-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

POSE_ORTHO_TOL = 1e-9


class ObjectClass(str, Enum):
    CAR = "Car"
    PEDESTRIAN = "Pedestrian"
    CYCLIST = "Cyclist"
    OTHER = "Other"


class Difficulty(str, Enum):
    EASY = "Easy"
    MODERATE = "Moderate"
    HARD = "Hard"
    UNKNOWN = "Unknown"


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    yaw = math.fmod(yaw, 2.0 * math.pi)
    if yaw > math.pi:
        yaw -= 2.0 * math.pi
    elif yaw <= -math.pi:
        yaw += 2.0 * math.pi
    return yaw


@dataclass(frozen=True)
class PointCloud:
    """N x 4 array of (x, y, z, intensity); meters and unitless [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.size == 0:
            arr = arr.reshape(0, 4)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError(f"point cloud must be (N, 4), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("point cloud contains non-finite values")
        if arr.shape[0] and (arr[:, 3].min() < 0.0 or arr[:, 3].max() > 1.0):
            raise ValueError("intensity out of [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.data[:, 3]

    def with_data(self, data: np.ndarray) -> "PointCloud":
        return PointCloud(data)

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 4), dtype=np.float32))


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: center (x, y, z), dims (l, w, h), yaw about +z."""

    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float
    cls: str = ObjectClass.CAR.value
    difficulty: str = Difficulty.UNKNOWN.value

    def __post_init__(self):
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"box dims must be positive, got {self.dims}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    @property
    def l(self) -> float:
        return self.dims[0]

    @property
    def w(self) -> float:
        return self.dims[1]

    @property
    def h(self) -> float:
        return self.dims[2]

    @property
    def volume(self) -> float:
        return self.dims[0] * self.dims[1] * self.dims[2]


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p' = rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3).copy()
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        if not np.allclose(r.T @ r, np.eye(3), atol=POSE_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if not math.isclose(float(np.linalg.det(r)), 1.0, abs_tol=POSE_ORTHO_TOL):
            raise ValueError("rotation determinant is not +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self o other)(p) = self(other(p))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class Calibration:
    """LiDAR-to-camera extrinsics plus 3x4 intrinsic projection matrix."""

    lidar_to_cam: Pose
    cam_intrinsics: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.cam_intrinsics, dtype=np.float64).reshape(3, 4).copy()
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("intrinsic focal entries must be positive")
        k.flags.writeable = False
        object.__setattr__(self, "cam_intrinsics", k)


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check an H x W x 3 uint8 RGB buffer and return it."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"image must be (H, W, 3) uint8, got {img.shape} {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image dimensions must be >= 1")
    return img


@dataclass(frozen=True)
class FrameBundle:
    """One sample: cloud + images + calibration + optional ego pose + boxes."""

    frame_id: str
    cloud: PointCloud
    images: dict = field(default_factory=dict)       # camera id -> ndarray
    calib: dict = field(default_factory=dict)        # camera id -> Calibration
    ego_pose: Optional[Pose] = None
    boxes: tuple = ()

    def __post_init__(self):
        for cam_id in self.images:
            if cam_id not in self.calib:
                raise ValueError(f"camera {cam_id!r} has no calibration entry")
            validate_image(self.images[cam_id])
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def with_cloud(self, cloud: PointCloud) -> "FrameBundle":
        return replace(self, cloud=cloud)

    def with_images(self, images: dict) -> "FrameBundle":
        return replace(self, images=dict(images))


@dataclass(frozen=True)
class CorruptionSpec:
    """(corruption id, severity 1..5, master seed) fully determines a run."""

    corruption: str
    severity: int
    master_seed: int

    def __post_init__(self):
        if self.severity not in (1, 2, 3, 4, 5):
            raise ValueError(f"severity must be in 1..5, got {self.severity}")


def check_severity(severity: int) -> int:
    if severity not in (1, 2, 3, 4, 5):
        raise ValueError(f"severity must be in 1..5, got {severity}")
    return int(severity)
