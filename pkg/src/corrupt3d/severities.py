"""Corruption taxonomy, severity schedules, and tunable physics constants.

Every severity table is indexed by severity 1..5 via ``level(table, s)``.
Values are the published schedules; constants that the source material
leaves open (impulse magnitude, scattering coefficients, blur increments)
live in :class:`PhysicsConstants` so they can be overridden per run.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .types import check_severity


class Corruption(str, Enum):
    # weather (both modalities)
    SNOW = "snow"
    RAIN = "rain"
    FOG = "fog"
    SUNLIGHT = "sunlight"
    # sensor, LiDAR
    DENSITY_DECREASE = "density_decrease"
    CUTOUT = "cutout"
    CROSSTALK = "crosstalk"
    FOV_LOST = "fov_lost"
    GAUSSIAN_NOISE_LIDAR = "gaussian_noise_lidar"
    UNIFORM_NOISE_LIDAR = "uniform_noise_lidar"
    IMPULSE_NOISE_LIDAR = "impulse_noise_lidar"
    # sensor, camera
    GAUSSIAN_NOISE_CAMERA = "gaussian_noise_camera"
    UNIFORM_NOISE_CAMERA = "uniform_noise_camera"
    IMPULSE_NOISE_CAMERA = "impulse_noise_camera"
    # motion
    MOTION_COMPENSATION = "motion_compensation"
    MOVING_OBJECT = "moving_object"
    MOTION_BLUR = "motion_blur"
    # object
    LOCAL_DENSITY_DECREASE = "local_density_decrease"
    LOCAL_CUTOUT = "local_cutout"
    LOCAL_GAUSSIAN = "local_gaussian"
    LOCAL_UNIFORM = "local_uniform"
    LOCAL_IMPULSE = "local_impulse"
    SHEAR = "shear"
    SCALE = "scale"
    ROTATION = "rotation"
    # alignment
    SPATIAL_MISALIGNMENT = "spatial_misalignment"
    TEMPORAL_MISALIGNMENT = "temporal_misalignment"


ALL_CORRUPTIONS = tuple(c.value for c in Corruption)
assert len(ALL_CORRUPTIONS) == 27

# Modalities each corruption touches.
LIDAR_CORRUPTIONS = frozenset({
    Corruption.SNOW, Corruption.RAIN, Corruption.FOG, Corruption.SUNLIGHT,
    Corruption.DENSITY_DECREASE, Corruption.CUTOUT, Corruption.CROSSTALK,
    Corruption.FOV_LOST, Corruption.GAUSSIAN_NOISE_LIDAR,
    Corruption.UNIFORM_NOISE_LIDAR, Corruption.IMPULSE_NOISE_LIDAR,
    Corruption.MOTION_COMPENSATION, Corruption.MOVING_OBJECT,
    Corruption.LOCAL_DENSITY_DECREASE, Corruption.LOCAL_CUTOUT,
    Corruption.LOCAL_GAUSSIAN, Corruption.LOCAL_UNIFORM,
    Corruption.LOCAL_IMPULSE, Corruption.SHEAR, Corruption.SCALE,
    Corruption.ROTATION, Corruption.TEMPORAL_MISALIGNMENT,
})
CAMERA_CORRUPTIONS = frozenset({
    Corruption.SNOW, Corruption.RAIN, Corruption.FOG, Corruption.SUNLIGHT,
    Corruption.GAUSSIAN_NOISE_CAMERA, Corruption.UNIFORM_NOISE_CAMERA,
    Corruption.IMPULSE_NOISE_CAMERA, Corruption.MOVING_OBJECT,
    Corruption.MOTION_BLUR, Corruption.SHEAR, Corruption.SCALE,
    Corruption.ROTATION, Corruption.TEMPORAL_MISALIGNMENT,
})
CALIB_CORRUPTIONS = frozenset({Corruption.SPATIAL_MISALIGNMENT})
BOX_DEPENDENT = frozenset({
    Corruption.MOVING_OBJECT, Corruption.LOCAL_DENSITY_DECREASE,
    Corruption.LOCAL_CUTOUT, Corruption.LOCAL_GAUSSIAN,
    Corruption.LOCAL_UNIFORM, Corruption.LOCAL_IMPULSE,
    Corruption.SHEAR, Corruption.SCALE, Corruption.ROTATION,
})
SEQUENCE_DEPENDENT = frozenset({Corruption.TEMPORAL_MISALIGNMENT})

# Not applicable to plain KITTI layouts: front-view-only clouds, and no
# per-frame localization or timestamp information.
KITTI_EXCLUDED = frozenset({
    Corruption.FOV_LOST,
    Corruption.MOTION_COMPENSATION,
    Corruption.TEMPORAL_MISALIGNMENT,
})
KITTI_CORRUPTIONS = tuple(c.value for c in Corruption if c not in KITTI_EXCLUDED)
assert len(KITTI_CORRUPTIONS) == 24


def level(table, severity: int):
    """Severity-1..5 lookup into a 5-entry schedule."""
    check_severity(severity)
    return table[severity - 1]


# ---------------------------------------------------------------------------
# LiDAR schedules
# ---------------------------------------------------------------------------
DENSITY_DROP_FRACTION = (0.06, 0.12, 0.18, 0.24, 0.30)
CUTOUT_GROUPS = (2, 3, 5, 7, 10)
CUTOUT_GROUP_DIVISOR = 50                     # each group removes N // 50 points
CROSSTALK_RATIO = (0.004, 0.008, 0.012, 0.016, 0.020)
FOV_HALF_ANGLE_DEG = (105.0, 90.0, 75.0, 60.0, 45.0)
COORD_NOISE_METERS = (0.02, 0.04, 0.06, 0.08, 0.10)   # Gaussian sigma / uniform bound
IMPULSE_DIVISOR = (30, 25, 20, 15, 10)                # N // k points affected
SUNLIGHT_RATIO = (0.01, 0.02, 0.03, 0.04, 0.05)
PRECIP_RATE_MM_H = (0.20, 0.73, 1.5625, 3.125, 7.29)  # rain and snow
FOG_ALPHA = (0.005, 0.01, 0.02, 0.03, 0.06)
POSE_ROT_SIGMA_RAD = (0.02, 0.04, 0.06, 0.08, 0.10)   # motion comp / spatial misalign
POSE_TRANS_SIGMA_M = (0.002, 0.004, 0.006, 0.008, 0.010)
MOVING_OBJECT_SHIFT_M = (0.2, 0.3, 0.4, 0.5, 0.6)
LOCAL_DENSITY_GROUPS = (1, 2, 3, 4, 5)
LOCAL_DENSITY_GROUP_FRACTION = 0.10
LOCAL_DENSITY_DELETE_FRACTION = 0.75
LOCAL_CUTOUT_FRACTION = (0.30, 0.40, 0.50, 0.60, 0.70)
STUCK_FRAMES = (2, 4, 6, 8, 10)

# ---------------------------------------------------------------------------
# Object-transform schedules
# ---------------------------------------------------------------------------
# Shear coefficients d, e, f, g: +/- uniform in the per-severity range.
# The severity-4 range is (0.15, 0.25), continuing the 0.05-step ladder.
SHEAR_RANGES = ((0.0, 0.1), (0.05, 0.15), (0.1, 0.2), (0.15, 0.25), (0.2, 0.3))
SCALE_DELTA = (0.04, 0.08, 0.12, 0.16, 0.20)          # factor = 1 +/- delta
ROTATION_RANGES_DEG = ((0.0, 2.0), (3.0, 4.0), (5.0, 6.0), (7.0, 8.0), (9.0, 10.0))

# ---------------------------------------------------------------------------
# Image schedules
# ---------------------------------------------------------------------------
IMG_UNIFORM_BOUND = (0.08, 0.12, 0.18, 0.26, 0.38)    # pixels in [0, 1]
IMG_GAUSSIAN_SIGMA = (0.04, 0.06, 0.08, 0.09, 0.10)
IMG_IMPULSE_FRACTION = (0.01, 0.02, 0.03, 0.05, 0.07)
RAIN_DENSITY = (0.01, 0.06, 0.10, 0.15, 0.20)         # fraction of pixels seeded
FOG_OPACITY = (0.10, 0.20, 0.30, 0.40, 0.50)
SUN_RADIUS_PX = (30, 40, 50, 60, 70)
ZOOM_FACTOR = (2, 3, 4, 5, 6)


@dataclass(frozen=True)
class PhysicsConstants:
    """Tunable constants not pinned by the published schedules."""

    impulse_magnitude_m: float = 0.10        # per-axis, random sign
    crosstalk_sigma_m: float = 3.0
    sunlight_sigma_m: float = 2.0
    # precipitation scattering: extinction beta = kappa * rate^0.6 [1/m]
    kappa_rain: float = 0.01
    kappa_snow: float = 0.02
    precip_rate_exponent: float = 0.6
    precip_drop_prob: float = 0.5            # drop vs scatter split
    precip_scatter_min_range_m: float = 0.5
    precip_scatter_intensity_scale: float = 0.3
    # fog backscatter
    fog_scatter_prob: float = 0.8            # of the (1 - T) extinguished mass
    fog_scatter_min_range_m: float = 1.0
    fog_scatter_max_range_m: float = 25.0
    fog_scatter_intensity: float = 0.2
    # image weather
    gray_mask_value: float = 128.0
    snow_rain_mask_opacity: float = 0.3
    snow_rain_brightness: float = 0.7
    zoom_blur_increment: float = 0.004
    sun_falloff_factor: float = 2.0          # falloff reaches zero at factor*radius
    snow_flakes_per_severity: int = 40
    rain_streak_length_px: int = 8
    tps_region_expand: float = 0.2


DEFAULT_CONSTANTS = PhysicsConstants()
