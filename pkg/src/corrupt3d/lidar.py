"""Point-cloud-only corruptions: weather, sensor, motion, and local families.

Every function is pure: it takes an immutable cloud plus an explicit
Generator and returns a new cloud. Counts derived from fractions always use
floor(); nearest-neighbor ties are broken by ascending point index.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from . import severities as sv
from .errors import MissingEgoPose
from .geometry import points_in_box, rot_z, sample_pose_perturbation, to_box_local
from .severities import DEFAULT_CONSTANTS, PhysicsConstants, level
from .types import PointCloud, Pose, check_severity


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    IMPULSE = "impulse"


def _cloud(xyz: np.ndarray, intensity: np.ndarray) -> PointCloud:
    return PointCloud(np.column_stack([xyz, intensity]).astype(np.float32))


def _delete(cloud: PointCloud, idx: np.ndarray) -> PointCloud:
    if idx.size == 0:
        return cloud
    mask = np.ones(cloud.n, dtype=bool)
    mask[idx] = False
    return PointCloud(cloud.data[mask])


def _nearest(xyz: np.ndarray, anchor: np.ndarray, k: int,
             candidates: np.ndarray) -> np.ndarray:
    """Indices (into the cloud) of the k candidates nearest to `anchor`."""
    if k <= 0 or candidates.size == 0:
        return np.zeros(0, dtype=np.int64)
    d = np.linalg.norm(xyz[candidates] - anchor, axis=1)
    order = np.lexsort((candidates, d))     # distance, then ascending index
    return candidates[order[:min(k, candidates.size)]]


# ---------------------------------------------------------------------------
# sensor level
# ---------------------------------------------------------------------------

def density_decrease(cloud: PointCloud, severity: int,
                     rng: np.random.Generator) -> PointCloud:
    """Uniformly delete a severity-scheduled fraction of all points."""
    frac = level(sv.DENSITY_DROP_FRACTION, severity)
    n_remove = int(np.floor(frac * cloud.n))
    if n_remove == 0:
        return cloud
    idx = rng.choice(cloud.n, size=n_remove, replace=False)
    return _delete(cloud, idx)


def cutout(cloud: PointCloud, severity: int,
           rng: np.random.Generator) -> PointCloud:
    """Remove ball-shaped groups of N // 50 points around random anchors."""
    groups = level(sv.CUTOUT_GROUPS, severity)
    group_size = cloud.n // sv.CUTOUT_GROUP_DIVISOR
    if cloud.n == 0 or group_size == 0:
        return cloud
    all_idx = np.arange(cloud.n)
    removed = np.zeros(cloud.n, dtype=bool)
    for _ in range(groups):
        anchor = cloud.xyz[rng.integers(cloud.n)]
        removed[_nearest(cloud.xyz, anchor, group_size, all_idx)] = True
    return PointCloud(cloud.data[~removed])


def _displace_subset(cloud: PointCloud, ratio: float, sigma: float,
                     rng: np.random.Generator) -> PointCloud:
    n_pick = int(np.floor(ratio * cloud.n))
    if n_pick == 0:
        return cloud
    idx = rng.choice(cloud.n, size=n_pick, replace=False)
    xyz = cloud.xyz.astype(np.float64)
    xyz[idx] += rng.normal(0.0, sigma, size=(n_pick, 3))
    return _cloud(xyz, cloud.intensity)


def lidar_crosstalk(cloud: PointCloud, severity: int, rng: np.random.Generator,
                    constants: PhysicsConstants = DEFAULT_CONSTANTS) -> PointCloud:
    """Strong Gaussian displacement of a small random subset of points."""
    ratio = level(sv.CROSSTALK_RATIO, severity)
    return _displace_subset(cloud, ratio, constants.crosstalk_sigma_m, rng)


def sunlight_lidar(cloud: PointCloud, severity: int, rng: np.random.Generator,
                   constants: PhysicsConstants = DEFAULT_CONSTANTS) -> PointCloud:
    """Strong-sunlight interference: 2 m Gaussian noise on a point subset."""
    ratio = level(sv.SUNLIGHT_RATIO, severity)
    return _displace_subset(cloud, ratio, constants.sunlight_sigma_m, rng)


def fov_lost(cloud: PointCloud, severity: int) -> PointCloud:
    """Keep only points with azimuth inside the reserved range (inclusive)."""
    half = level(sv.FOV_HALF_ANGLE_DEG, severity)
    if cloud.n == 0:
        return cloud
    az = np.degrees(np.arctan2(cloud.xyz[:, 1], cloud.xyz[:, 0]))
    return PointCloud(cloud.data[np.abs(az) <= half])


def _noise_displacement(kind: NoiseKind, severity: int, n: int,
                        rng: np.random.Generator,
                        constants: PhysicsConstants):
    """(delta, affected_indices or None) for a population of n points."""
    if kind == NoiseKind.GAUSSIAN:
        sigma = level(sv.COORD_NOISE_METERS, severity)
        return rng.normal(0.0, sigma, size=(n, 3)), None
    if kind == NoiseKind.UNIFORM:
        bound = level(sv.COORD_NOISE_METERS, severity)
        return rng.uniform(-bound, bound, size=(n, 3)), None
    divisor = level(sv.IMPULSE_DIVISOR, severity)
    n_pick = n // divisor
    idx = rng.choice(n, size=n_pick, replace=False) if n_pick else np.zeros(0, int)
    signs = rng.integers(0, 2, size=(n_pick, 3)) * 2 - 1
    return constants.impulse_magnitude_m * signs, idx


def coord_noise(cloud: PointCloud, kind: NoiseKind, severity: int,
                rng: np.random.Generator,
                constants: PhysicsConstants = DEFAULT_CONSTANTS) -> PointCloud:
    """Gaussian/uniform noise on all points, or impulse noise on N // k points."""
    check_severity(severity)
    if cloud.n == 0:
        return cloud
    delta, idx = _noise_displacement(kind, severity, cloud.n, rng, constants)
    xyz = cloud.xyz.astype(np.float64)
    if idx is None:
        xyz += delta
    else:
        xyz[idx] += delta
    return _cloud(xyz, cloud.intensity)


# ---------------------------------------------------------------------------
# weather level
# ---------------------------------------------------------------------------

def precip_scatter(cloud: PointCloud, kind: str, severity: int,
                   rng: np.random.Generator,
                   constants: PhysicsConstants = DEFAULT_CONSTANTS) -> PointCloud:
    """Rain/snow Monte Carlo: extinction, random drop, or scattered return.

    Extinction beta = kappa * rate^0.6 per meter; two-way transmission
    T = exp(-2 beta d). With probability (1 - T) a return is lost: half are
    dropped outright, half become a scattered return at a random shorter
    range with attenuated intensity. Survivors keep their position with
    intensity scaled by T.
    """
    check_severity(severity)
    if kind not in ("rain", "snow"):
        raise ValueError(f"kind must be 'rain' or 'snow', got {kind!r}")
    if cloud.n == 0:
        return cloud
    rate = level(sv.PRECIP_RATE_MM_H, severity)
    kappa = constants.kappa_rain if kind == "rain" else constants.kappa_snow
    beta = kappa * rate ** constants.precip_rate_exponent

    xyz = cloud.xyz.astype(np.float64)
    d = np.linalg.norm(xyz, axis=1)
    trans = np.exp(-2.0 * beta * d)
    u_affect = rng.random(cloud.n)
    u_branch = rng.random(cloud.n)
    u_range = rng.random(cloud.n)

    affected = u_affect < (1.0 - trans)
    dropped = affected & (u_branch < constants.precip_drop_prob)
    scattered = affected & ~dropped

    intensity = cloud.intensity.astype(np.float64)
    intensity[~affected] *= trans[~affected]

    lo = np.minimum(constants.precip_scatter_min_range_m, d)
    new_range = lo + u_range * (d - lo)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(d[:, None] > 0, xyz / np.maximum(d, 1e-12)[:, None], 0.0)
    xyz[scattered] = unit[scattered] * new_range[scattered, None]
    intensity[scattered] = cloud.intensity[scattered] * \
        constants.precip_scatter_intensity_scale

    keep = ~dropped
    return _cloud(xyz[keep], np.clip(intensity[keep], 0.0, 1.0))


def fog_lidar(cloud: PointCloud, severity: int, rng: np.random.Generator,
              constants: PhysicsConstants = DEFAULT_CONSTANTS) -> PointCloud:
    """Fog attenuation with probabilistic near-range backscatter returns."""
    check_severity(severity)
    if cloud.n == 0:
        return cloud
    alpha = level(sv.FOG_ALPHA, severity)
    xyz = cloud.xyz.astype(np.float64)
    d = np.linalg.norm(xyz, axis=1)
    trans = np.exp(-2.0 * alpha * d)
    u_affect = rng.random(cloud.n)
    u_range = rng.random(cloud.n)

    scattered = u_affect < (1.0 - trans) * constants.fog_scatter_prob
    hi = np.minimum(d, constants.fog_scatter_max_range_m)
    lo = np.minimum(constants.fog_scatter_min_range_m, hi)
    new_range = lo + u_range * (hi - lo)

    intensity = cloud.intensity.astype(np.float64)
    intensity[~scattered] *= trans[~scattered]
    intensity[scattered] = constants.fog_scatter_intensity
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(d[:, None] > 0, xyz / np.maximum(d, 1e-12)[:, None], 0.0)
    xyz[scattered] = unit[scattered] * new_range[scattered, None]
    return _cloud(xyz, np.clip(intensity, 0.0, 1.0))


# ---------------------------------------------------------------------------
# object level (box-scoped)
# ---------------------------------------------------------------------------

def local_noise(cloud: PointCloud, boxes, kind: NoiseKind, severity: int,
                rng: np.random.Generator,
                constants: PhysicsConstants = DEFAULT_CONSTANTS) -> PointCloud:
    """coord_noise restricted to points inside each box (impulse uses N_bbox)."""
    check_severity(severity)
    if not boxes or cloud.n == 0:
        return cloud
    xyz = cloud.xyz.astype(np.float64)
    intensity = cloud.intensity
    for box in boxes:
        idx = points_in_box(cloud, box)
        if idx.size == 0:
            continue
        delta, sub = _noise_displacement(kind, severity, idx.size, rng, constants)
        if sub is None:
            xyz[idx] += delta
        else:
            xyz[idx[sub]] += delta
    return _cloud(xyz, intensity)


def local_density_decrease(cloud: PointCloud, boxes, severity: int,
                           rng: np.random.Generator) -> PointCloud:
    """Delete 75% of each of `severity` ball groups of 10% of in-box points."""
    check_severity(severity)
    if not boxes or cloud.n == 0:
        return cloud
    removed = np.zeros(cloud.n, dtype=bool)
    for box in boxes:
        idx = points_in_box(cloud, box)
        group_size = int(np.floor(sv.LOCAL_DENSITY_GROUP_FRACTION * idx.size))
        if group_size == 0:
            continue
        n_anchors = min(severity, idx.size)
        anchors = rng.choice(idx.size, size=n_anchors, replace=False)
        n_delete = int(np.floor(sv.LOCAL_DENSITY_DELETE_FRACTION * group_size))
        for a in anchors:
            group = _nearest(cloud.xyz, cloud.xyz[idx[a]], group_size, idx)
            if n_delete:
                removed[rng.choice(group, size=n_delete, replace=False)] = True
    return PointCloud(cloud.data[~removed])


def local_cutout(cloud: PointCloud, boxes, severity: int,
                 rng: np.random.Generator) -> PointCloud:
    """Remove a severity-scheduled fraction of in-box points around an anchor."""
    frac = level(sv.LOCAL_CUTOUT_FRACTION, severity)
    if not boxes or cloud.n == 0:
        return cloud
    removed = np.zeros(cloud.n, dtype=bool)
    for box in boxes:
        idx = points_in_box(cloud, box)
        k = int(np.floor(frac * idx.size))
        if idx.size == 0 or k == 0:
            continue
        anchor = cloud.xyz[idx[rng.integers(idx.size)]]
        removed[_nearest(cloud.xyz, anchor, k, idx)] = True
    return PointCloud(cloud.data[~removed])


def moving_object_lidar(cloud: PointCloud, boxes, severity: int) -> PointCloud:
    """Smear each object into three parts shifted 0, c/2, c along its heading.

    Deterministic: the partition is by box-local x at -l/6 and +l/6.
    """
    shift = level(sv.MOVING_OBJECT_SHIFT_M, severity)
    if not boxes or cloud.n == 0:
        return cloud
    xyz = cloud.xyz.astype(np.float64)
    intensity = cloud.intensity
    for box in boxes:
        idx = points_in_box(cloud, box)
        if idx.size == 0:
            continue
        local = to_box_local(cloud.xyz[idx], box)
        offsets = np.zeros(idx.size)
        offsets[(local[:, 0] >= -box.l / 6.0) & (local[:, 0] <= box.l / 6.0)] = shift / 2.0
        offsets[local[:, 0] > box.l / 6.0] = shift
        local[:, 0] += offsets
        xyz[idx] = local @ rot_z(box.yaw).T + np.asarray(box.center)
    return _cloud(xyz, intensity)


# ---------------------------------------------------------------------------
# motion level
# ---------------------------------------------------------------------------

def motion_compensation(cloud: PointCloud, ego_pose: Pose | None, severity: int,
                        rng: np.random.Generator) -> PointCloud:
    """Miscompensated ego motion: one random rigid perturbation of the frame."""
    check_severity(severity)
    if ego_pose is None:
        raise MissingEgoPose("motion_compensation requires an ego pose")
    sigma_r = level(sv.POSE_ROT_SIGMA_RAD, severity)
    sigma_t = level(sv.POSE_TRANS_SIGMA_M, severity)
    delta = sample_pose_perturbation(rng, sigma_r, sigma_t)
    if cloud.n == 0:
        return cloud
    return _cloud(delta.apply(cloud.xyz), cloud.intensity)
