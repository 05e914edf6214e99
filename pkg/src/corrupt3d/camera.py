"""Image-only corruptions: sensor noise, weather overlays, and zoom blur.

Pixels are processed as floats on the 0..255 scale, then rounded and
clamped back to uint8, so every output byte is in range by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import severities as sv
from .lidar import NoiseKind
from .severities import DEFAULT_CONSTANTS, PhysicsConstants, level
from .tps import bilinear_sample
from .types import check_severity, validate_image


@dataclass(frozen=True)
class Region2D:
    """Half-open axis-aligned pixel rectangle [u0, u1) x [v0, v1)."""

    u0: int
    v0: int
    u1: int
    v1: int

    def __post_init__(self):
        if self.u0 > self.u1 or self.v0 > self.v1:
            raise ValueError("region must satisfy u0 <= u1 and v0 <= v1")

    def clipped(self, width: int, height: int) -> "Region2D":
        return Region2D(max(0, min(self.u0, width)), max(0, min(self.v0, height)),
                        max(0, min(self.u1, width)), max(0, min(self.v1, height)))

    @property
    def empty(self) -> bool:
        return self.u0 >= self.u1 or self.v0 >= self.v1


def _quantize(img_f: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img_f), 0, 255).astype(np.uint8)


def image_noise(img: np.ndarray, kind: NoiseKind, severity: int,
                rng: np.random.Generator) -> np.ndarray:
    """Gaussian/uniform additive noise, or salt-and-pepper impulse noise."""
    img = validate_image(img)
    check_severity(severity)
    h, w = img.shape[:2]
    if kind == NoiseKind.IMPULSE:
        frac = level(sv.IMG_IMPULSE_FRACTION, severity)
        n_pix = int(np.floor(frac * h * w))
        out = img.copy()
        if n_pix:
            flat = rng.choice(h * w, size=n_pix, replace=False)
            salt = rng.integers(0, 2, size=n_pix).astype(bool)
            vv, uu = np.divmod(flat, w)
            out[vv[salt], uu[salt]] = 255
            out[vv[~salt], uu[~salt]] = 0
        return out
    if kind == NoiseKind.GAUSSIAN:
        sigma = level(sv.IMG_GAUSSIAN_SIGMA, severity)
        noise = rng.normal(0.0, sigma * 255.0, size=img.shape)
    else:
        bound = level(sv.IMG_UNIFORM_BOUND, severity)
        noise = rng.uniform(-bound * 255.0, bound * 255.0, size=img.shape)
    return _quantize(img.astype(np.float64) + noise)


# ---------------------------------------------------------------------------
# weather overlays
# ---------------------------------------------------------------------------

def _draw_streaks(img_f: np.ndarray, seeds_uv: np.ndarray, length: int,
                  direction: np.ndarray, value: float) -> None:
    """Paint straight streaks in place, starting at each seed pixel."""
    h, w = img_f.shape[:2]
    if seeds_uv.shape[0] == 0:
        return
    t = np.arange(length, dtype=np.float64)
    uu = np.rint(seeds_uv[:, 0:1] + t[None, :] * direction[0]).astype(np.int64)
    vv = np.rint(seeds_uv[:, 1:2] + t[None, :] * direction[1]).astype(np.int64)
    keep = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
    img_f[vv[keep], uu[keep]] = value


def _value_noise_field(shape, rng: np.random.Generator, cell: int = 32) -> np.ndarray:
    """Low-frequency noise in [0, 1]: coarse grid upsampled bilinearly."""
    h, w = shape
    gh = h // cell + 2
    gw = w // cell + 2
    grid = rng.random((gh, gw))
    ys = np.linspace(0.0, gh - 1.0, h)
    xs = np.linspace(0.0, gw - 1.0, w)
    xx, yy = np.meshgrid(xs, ys)
    return bilinear_sample(grid, xx, yy)


def weather_image(img: np.ndarray, kind: str, severity: int,
                  rng: np.random.Generator,
                  constants: PhysicsConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Snow/rain streaks, fog haze, or a sun disc, with the standard blends.

    Snow and rain then get a 30%-opacity gray mask and a 30% brightness
    reduction; fog blends toward mid-gray with a severity-scheduled
    opacity modulated by a low-frequency haze field.
    """
    img = validate_image(img)
    check_severity(severity)
    h, w = img.shape[:2]
    gray = constants.gray_mask_value
    out = img.astype(np.float64)

    if kind in ("snow", "rain"):
        if kind == "snow":
            n = constants.snow_flakes_per_severity * severity
            seeds = np.column_stack([rng.uniform(0, w, n), rng.uniform(0, h, n)])
            angle = rng.uniform(-0.2, 0.2)
            direction = np.array([np.sin(angle), np.cos(angle)])
            _draw_streaks(out, seeds, 4 + 2 * severity, direction, 255.0)
        else:
            density = level(sv.RAIN_DENSITY, severity)
            n = int(np.floor(density * h * w))
            seeds = np.column_stack([rng.uniform(0, w, n), rng.uniform(0, h, n)])
            direction = np.array([np.sin(0.25), np.cos(0.25)])   # slanted ~14 deg
            _draw_streaks(out, seeds, constants.rain_streak_length_px,
                          direction, 220.0)
        o = constants.snow_rain_mask_opacity
        out = ((1.0 - o) * out + o * gray) * constants.snow_rain_brightness
    elif kind == "fog":
        opacity = level(sv.FOG_OPACITY, severity)
        field = _value_noise_field((h, w), rng)
        o_local = opacity * (0.5 + 0.5 * field)[..., None]
        out = (1.0 - o_local) * out + o_local * gray
    elif kind == "sunlight":
        radius = float(level(sv.SUN_RADIUS_PX, severity))
        cx = rng.uniform(0, w)
        cy = rng.uniform(0, 0.4 * h)
        uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
        rho = np.hypot(uu - cx, vv - cy)
        reach = constants.sun_falloff_factor * radius
        weight = np.clip((reach - rho) / (reach - radius), 0.0, 1.0)[..., None]
        out = (1.0 - weight) * out + weight * 255.0
    else:
        raise ValueError(f"unknown weather kind {kind!r}")
    return _quantize(out)


# ---------------------------------------------------------------------------
# zoom blur
# ---------------------------------------------------------------------------

def _zoom_frame(img_f: np.ndarray, scale: float, cx: float, cy: float) -> np.ndarray:
    """Scale about (cx, cy) with bilinear inverse mapping, edge-clamped."""
    h, w = img_f.shape[:2]
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    sx = cx + (uu - cx) / scale
    sy = cy + (vv - cy) / scale
    return bilinear_sample(img_f, sx, sy)


def _zoom_blur(img_f: np.ndarray, severity: int,
               constants: PhysicsConstants) -> np.ndarray:
    z = level(sv.ZOOM_FACTOR, severity)
    h, w = img_f.shape[:2]
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    acc = np.zeros_like(img_f, dtype=np.float64)
    for i in range(z):
        acc += _zoom_frame(img_f, 1.0 + i * constants.zoom_blur_increment * z, cx, cy)
    return acc / z


def motion_blur(img: np.ndarray, severity: int,
                constants: PhysicsConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Zoom blur about the image center: average of progressively scaled frames."""
    img = validate_image(img)
    check_severity(severity)
    return _quantize(_zoom_blur(img.astype(np.float64), severity, constants))


def moving_object_image(img: np.ndarray, regions, severity: int,
                        constants: PhysicsConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Zoom blur applied independently inside each region, about its center."""
    img = validate_image(img)
    check_severity(severity)
    h, w = img.shape[:2]
    out = img.copy()
    for region in regions:
        r = region.clipped(w, h)
        if r.empty:
            continue
        patch = out[r.v0:r.v1, r.u0:r.u1].astype(np.float64)
        out[r.v0:r.v1, r.u0:r.u1] = _quantize(
            _zoom_blur(patch, severity, constants))
    return out
