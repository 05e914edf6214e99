"""Box geometry, coordinate transforms, camera projection, seed derivation.

All operations are pure; random state is always passed explicitly as a
numpy Generator so results are reproducible bit-for-bit.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .types import Box3D, Calibration, PointCloud

# Canonical corner ordering in box-local coordinates, before yaw/translation:
# bottom face counter-clockwise starting at (+l/2, +w/2, -h/2), then the top
# face in the same order. TPS control points rely on this being stable.
_CORNER_SIGNS = np.array([
    [+1, +1, -1],
    [-1, +1, -1],
    [-1, -1, -1],
    [+1, -1, -1],
    [+1, +1, +1],
    [-1, +1, +1],
    [-1, -1, +1],
    [+1, -1, +1],
], dtype=np.float64)


def rot_z(angle: float) -> np.ndarray:
    """3x3 rotation about +z by `angle` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def to_box_local(pts: np.ndarray, box: Box3D) -> np.ndarray:
    """Map world points into the box frame (center at origin, yaw removed)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    return (pts - np.asarray(box.center)) @ rot_z(box.yaw)


def from_box_local(pts: np.ndarray, box: Box3D) -> np.ndarray:
    """Inverse of :func:`to_box_local`."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    return pts @ rot_z(box.yaw).T + np.asarray(box.center)


def points_in_box(cloud: PointCloud, box: Box3D) -> np.ndarray:
    """Indices of cloud points inside the box (faces inclusive)."""
    if cloud.n == 0:
        return np.zeros(0, dtype=np.int64)
    local = to_box_local(cloud.xyz, box)
    half = np.array([box.l, box.w, box.h]) / 2.0
    inside = np.all(np.abs(local) <= half, axis=1)
    return np.nonzero(inside)[0]


def box_corners(box: Box3D) -> np.ndarray:
    """8 corners in world coordinates, canonical order (see _CORNER_SIGNS)."""
    half = np.array([box.l, box.w, box.h]) / 2.0
    return from_box_local(_CORNER_SIGNS * half, box)


def project_to_image(pts: np.ndarray, calib: Calibration):
    """Project world points to pixels.

    Returns (uv, valid): uv is (N, 2) pixel coordinates and valid flags
    points with positive camera-frame depth. Pixel values for invalid
    points are not meaningful.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    cam = calib.lidar_to_cam.apply(pts)
    hom = np.hstack([cam, np.ones((cam.shape[0], 1))])
    proj = hom @ calib.cam_intrinsics.T
    depth = proj[:, 2]
    valid = depth > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = proj[:, :2] / depth[:, None]
    return uv, valid


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis; orthonormal by construction."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def sample_pose_perturbation(rng: np.random.Generator, sigma_rot: float,
                             sigma_trans: float):
    """Small random rigid motion: axis-angle rotation + Gaussian translation.

    The axis is uniform on the sphere and the angle is N(0, sigma_rot^2),
    which keeps the rotation exactly in SO(3).
    """
    from .types import Pose

    axis = rng.normal(size=3)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        axis = np.array([0.0, 0.0, 1.0])
    else:
        axis = axis / norm
    angle = rng.normal(0.0, sigma_rot) if sigma_rot > 0 else 0.0
    trans = rng.normal(0.0, sigma_trans, size=3) if sigma_trans > 0 else np.zeros(3)
    return Pose(axis_angle_matrix(axis, angle), trans)


def derive_seed(master_seed: int, *parts) -> int:
    """Deterministic 64-bit seed from the master seed and identifying parts.

    SHA-256 over the pipe-delimited decimal/string serialization of the
    tuple; first 8 digest bytes interpreted little-endian. Stable across
    platforms and processes.
    """
    payload = "|".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seed gives an identical draw sequence."""
    return np.random.default_rng(seed)
