"""Corruptions acting on both modalities or on their relationship.

Object-level shear/scale/rotation deform in-box LiDAR points in box-local
coordinates and drive a matching thin-plate-spline warp on the image via
the projected 8 box corners. Alignment corruptions perturb the calibration
or substitute one modality's payload from an earlier frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import severities as sv
from .errors import DegenerateControlPoints
from .geometry import (_CORNER_SIGNS, box_corners, from_box_local, points_in_box,
                       project_to_image, rot_z, sample_pose_perturbation)
from .severities import DEFAULT_CONSTANTS, PhysicsConstants, level
from .tps import TpsWarp, tps_apply, tps_fit
from .types import (Box3D, Calibration, FrameBundle, PointCloud, check_severity)

TRANSFORM_KINDS = ("shear", "scale", "rotation")


@dataclass(frozen=True)
class ObjectTransform:
    """One sampled per-object deformation applied in box-local coordinates."""

    kind: str                     # shear | scale | rotation
    params: tuple

    def matrix(self) -> np.ndarray:
        """3x3 matrix M such that local points transform as p' = p @ M."""
        if self.kind == "shear":
            d, e, f, g = self.params
            return np.array([[1.0, 0.0, d], [e, 1.0, f], [g, 0.0, 1.0]])
        if self.kind == "scale":
            return np.diag(self.params)
        (angle,) = self.params
        return rot_z(angle).T

    def apply_local(self, pts: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(pts, dtype=np.float64)) @ self.matrix()


def sample_object_transform(kind: str, severity: int,
                            rng: np.random.Generator) -> ObjectTransform:
    """Draw transform parameters from the per-severity schedules."""
    check_severity(severity)
    if kind == "shear":
        lo, hi = level(sv.SHEAR_RANGES, severity)
        mags = rng.uniform(lo, hi, size=4)
        signs = rng.integers(0, 2, size=4) * 2 - 1
        return ObjectTransform("shear", tuple(mags * signs))
    if kind == "scale":
        delta = level(sv.SCALE_DELTA, severity)
        signs = rng.integers(0, 2, size=3) * 2 - 1
        return ObjectTransform("scale", tuple(1.0 + signs * delta))
    if kind == "rotation":
        lo, hi = level(sv.ROTATION_RANGES_DEG, severity)
        sign = rng.integers(0, 2) * 2 - 1
        return ObjectTransform("rotation",
                               (math.radians(sign * rng.uniform(lo, hi)),))
    raise ValueError(f"unknown transform kind {kind!r}")


def transform_box_corners(box: Box3D, transform: ObjectTransform):
    """(pre, post) world-space 8-corner sets under the box-local transform."""
    half = np.array([box.l, box.w, box.h]) / 2.0
    local = _CORNER_SIGNS * half
    return box_corners(box), from_box_local(transform.apply_local(local), box)


def corner_warp(box: Box3D, transform: ObjectTransform,
                calib: Calibration) -> TpsWarp:
    """TPS warp whose control points are the projected pre/post corners.

    Raises DegenerateControlPoints if any corner is behind the camera or
    the projected points are degenerate.
    """
    pre, post = transform_box_corners(box, transform)
    uv_pre, ok_pre = project_to_image(pre, calib)
    uv_post, ok_post = project_to_image(post, calib)
    if not (ok_pre.all() and ok_post.all()):
        raise DegenerateControlPoints("box corners behind camera")
    return tps_fit(uv_pre, uv_post)


def _warp_region(warp: TpsWarp, width: int, height: int,
                 expand: float) -> tuple[int, int, int, int]:
    pts = np.vstack([warp.src, warp.dst])
    u0, v0 = pts.min(axis=0)
    u1, v1 = pts.max(axis=0)
    du = (u1 - u0) * expand / 2.0
    dv = (v1 - v0) * expand / 2.0
    return (int(np.floor(u0 - du)), int(np.floor(v0 - dv)),
            int(np.ceil(u1 + du)) + 1, int(np.ceil(v1 + dv)) + 1)


def apply_object_transform(frame: FrameBundle, kind: str, severity: int,
                           rng: np.random.Generator,
                           constants: PhysicsConstants = DEFAULT_CONSTANTS) -> FrameBundle:
    """Deform every object consistently in the cloud and all images.

    One transform is sampled per box (in box order, so a fixed rng seed
    fixes every transform). When a box's image warp is degenerate (corners
    behind the camera or edge-on) the image step for that box is skipped
    and the LiDAR step is still applied.
    """
    check_severity(severity)
    xyz = frame.cloud.xyz.astype(np.float64)
    images = {cid: img.copy() for cid, img in frame.images.items()}

    for box in frame.boxes:
        transform = sample_object_transform(kind, severity, rng)
        idx = points_in_box(frame.cloud, box)
        if idx.size:
            local = (frame.cloud.xyz[idx].astype(np.float64)
                     - np.asarray(box.center)) @ rot_z(box.yaw)
            xyz[idx] = from_box_local(transform.apply_local(local), box)
        for cam_id, img in images.items():
            try:
                warp = corner_warp(box, transform, frame.calib[cam_id])
            except DegenerateControlPoints:
                continue
            h, w = img.shape[:2]
            region = _warp_region(warp, w, h, constants.tps_region_expand)
            images[cam_id] = tps_apply(img, warp, region=region)

    cloud = PointCloud(np.column_stack([xyz, frame.cloud.intensity])
                       .astype(np.float32))
    return frame.with_cloud(cloud).with_images(images)


def spatial_misalignment(calib: Calibration, severity: int,
                         rng: np.random.Generator) -> Calibration:
    """Perturb the LiDAR-to-camera extrinsics; intrinsics untouched."""
    check_severity(severity)
    sigma_r = level(sv.POSE_ROT_SIGMA_RAD, severity)
    sigma_t = level(sv.POSE_TRANS_SIGMA_M, severity)
    delta = sample_pose_perturbation(rng, sigma_r, sigma_t)
    return Calibration(lidar_to_cam=delta.compose(calib.lidar_to_cam),
                       cam_intrinsics=calib.cam_intrinsics)


def temporal_misalignment(seq, frame_index: int, modality: str,
                          severity: int) -> FrameBundle:
    """Replace one modality's payload with that of an earlier (stuck) frame.

    seq is an ordered sequence of FrameBundle; the source index clamps to 0.
    Annotations and the other modality stay with the requested frame.
    """
    check_severity(severity)
    if modality not in ("lidar", "camera"):
        raise ValueError(f"modality must be 'lidar' or 'camera', got {modality!r}")
    if not seq:
        raise ValueError("sequence is empty")
    stuck = level(sv.STUCK_FRAMES, severity)
    frame = seq[frame_index]
    source = seq[max(0, frame_index - stuck)]
    if modality == "lidar":
        return frame.with_cloud(source.cloud)
    return frame.with_images(source.images)
